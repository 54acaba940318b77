"""Domain data model: datasets, column scaling and penalty plans.

The model has no intercept: callers that want one append a constant column
to the controls. The theoretical penalty rule was derived for centered
Gaussian designs; a constant column is accepted and penalized like any other.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pyrobustlasso.exceptions import DataValidationError

FloatArray = NDArray[np.float64]


def _frozen(values: FloatArray) -> FloatArray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Outcome, treatments and controls of one sample.

    Attributes:
        y: Outcome vector, shape (n,)
        D: Treatment matrix, shape (n, K)
        X: Control matrix, shape (n, p); p may be 0
        treatment_names: Names of the K treatment columns
        control_names: Names of the p control columns
        outcome_name: Name of the outcome column
    """

    y: FloatArray
    D: FloatArray
    X: FloatArray
    treatment_names: tuple[str, ...] = field(default=())
    control_names: tuple[str, ...] = field(default=())
    outcome_name: str = "y"

    @property
    def n(self) -> int:
        """Number of observations."""
        return int(self.y.shape[0])

    @property
    def K(self) -> int:  # noqa: N802
        """Number of treatments."""
        return int(self.D.shape[1])

    @property
    def p(self) -> int:
        """Number of controls."""
        return int(self.X.shape[1])

    def permuted(self, order: Sequence[int] | NDArray[np.intp]) -> "Dataset":
        """Return a copy with rows reordered by ``order``."""
        idx = np.asarray(order)
        return validate_dataset(
            self.y[idx],
            self.D[idx],
            self.X[idx],
            treatment_names=self.treatment_names,
            control_names=self.control_names,
            outcome_name=self.outcome_name,
        )


def _as_matrix(values: ArrayLike, name: str) -> FloatArray:
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DataValidationError(f"{name} is not numeric: {e}", column=name) from e
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DataValidationError(
            f"{name} must be a 2-D matrix, got {arr.ndim} dimensions", column=name
        )
    return arr


def _check_finite(arr: FloatArray, name: str, names: Sequence[str] = ()) -> None:
    table = arr.reshape(arr.shape[0], -1)
    bad = ~np.isfinite(table)
    if not bad.any():
        return
    rows, cols = np.nonzero(bad)
    row, col = int(rows[0]), int(cols[0])
    column: str | int = names[col] if col < len(names) else col
    where = f"row {row}" if arr.ndim == 1 else f"row {row}, column {column}"
    raise DataValidationError(
        f"Non-finite entry in {name} at {where}: {table[row, col]}",
        row=row,
        column=name if arr.ndim == 1 else column,
    )


def validate_dataset(
    y: ArrayLike,
    D: ArrayLike,
    X: ArrayLike | None = None,
    treatment_names: Sequence[str] | None = None,
    control_names: Sequence[str] | None = None,
    outcome_name: str = "y",
) -> Dataset:
    """
    Validate raw arrays and build an immutable Dataset.

    Rows are never dropped: any problem raises DataValidationError.

    Args:
        y: Outcome vector of length n
        D: Treatments, shape (n, K) or a length-n vector for K = 1
        X: Controls, shape (n, p); None means p = 0
        treatment_names: Optional names for the treatment columns
        control_names: Optional names for the control columns
        outcome_name: Name of the outcome column

    Returns:
        Validated Dataset (arrays copied and made read-only)

    Raises:
        DataValidationError: On dimension mismatch, non-finite entries or
            n < 2
    """
    try:
        y_arr = np.array(y, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DataValidationError(f"y is not numeric: {e}", column="y") from e
    if y_arr.ndim == 2 and y_arr.shape[1] == 1:
        y_arr = y_arr[:, 0]
    if y_arr.ndim != 1:
        raise DataValidationError(f"y must be a vector, got shape {y_arr.shape}")

    n = y_arr.shape[0]
    D_arr = _as_matrix(D, "D")
    if X is None or (np.ndim(X) == 1 and np.size(X) == 0):
        X_arr = np.zeros((n, 0))
    else:
        X_arr = _as_matrix(X, "X")

    if D_arr.shape[0] != n or X_arr.shape[0] != n:
        raise DataValidationError(
            "Dimension mismatch: y has "
            f"{n} rows, D has {D_arr.shape[0]} rows, X has {X_arr.shape[0]} rows"
        )
    if n < 2:
        raise DataValidationError(f"Need at least 2 observations, got {n}")
    if D_arr.shape[1] < 1:
        raise DataValidationError("Need at least one treatment column")

    t_names = tuple(treatment_names) if treatment_names is not None else tuple(
        f"d{k + 1}" for k in range(D_arr.shape[1])
    )
    c_names = tuple(control_names) if control_names is not None else tuple(
        f"x{j + 1}" for j in range(X_arr.shape[1])
    )
    if len(t_names) != D_arr.shape[1] or len(c_names) != X_arr.shape[1]:
        raise DataValidationError("Column names do not match matrix widths")

    _check_finite(y_arr, outcome_name)
    _check_finite(D_arr, "D", t_names)
    _check_finite(X_arr, "X", c_names)

    return Dataset(
        y=_frozen(y_arr),
        D=_frozen(np.asfortranarray(D_arr)),
        X=_frozen(np.asfortranarray(X_arr)),
        treatment_names=t_names,
        control_names=c_names,
        outcome_name=outcome_name,
    )


@dataclass(frozen=True, eq=False)
class ColumnScaler:
    """
    Diagonal penalty loadings, one root-mean-square per control column.

    Columns with psi_j = 0 are identically zero; solvers exclude them from
    penalization and pin their coefficient at 0.
    """

    psi: FloatArray

    @property
    def active(self) -> NDArray[np.bool_]:
        """Mask of columns with nonzero loading."""
        return self.psi > 0


def column_scaler(X: ArrayLike) -> ColumnScaler:
    """
    Compute psi_j = sqrt((1/n) * sum_i X_ij^2) for each column of X.

    Args:
        X: Control matrix, shape (n, p)

    Returns:
        ColumnScaler with a read-only psi vector of length p
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    n = arr.shape[0]
    psi = np.sqrt(np.einsum("ij,ij->j", arr, arr) / n)
    return ColumnScaler(psi=_frozen(psi))


class PenaltyPlan(BaseModel):
    """
    Penalty levels for the K+1 first-stage regressions.

    Index 0 is the outcome regression, index k >= 1 the regression of
    treatment k on the controls. A lambda_gamma of 0 disables the outlier
    parameters of that regression altogether.
    """

    model_config = ConfigDict(frozen=True)

    lambda_beta: tuple[float, ...] = Field(..., min_length=2)
    lambda_gamma: tuple[float, ...] = Field(..., min_length=2)
    c_const: float = Field(default=1.01, gt=1.0)

    @model_validator(mode="after")
    def _check_levels(self) -> "PenaltyPlan":
        if len(self.lambda_beta) != len(self.lambda_gamma):
            raise ValueError(
                "lambda_beta and lambda_gamma must have the same length "
                f"({len(self.lambda_beta)} != {len(self.lambda_gamma)})"
            )
        for name, levels in (
            ("lambda_beta", self.lambda_beta),
            ("lambda_gamma", self.lambda_gamma),
        ):
            if any(not np.isfinite(v) or v < 0 for v in levels):
                raise ValueError(f"{name} entries must be finite and >= 0")
        return self

    @property
    def K(self) -> int:  # noqa: N802
        """Number of treatments covered by the plan."""
        return len(self.lambda_beta) - 1

    def without_outlier_penalty(self) -> "PenaltyPlan":
        """Plan for the non-robust baseline: every lambda_gamma set to 0."""
        return self.model_copy(
            update={"lambda_gamma": tuple(0.0 for _ in self.lambda_gamma)}
        )
