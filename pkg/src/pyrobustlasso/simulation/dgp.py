"""Simulation design with sparse controls and shift outliers.

x_i ~ N(0, I_p), one treatment

    d_i = x_i' beta1 + gamma1_i + xi1_i,  beta1_k = 10 for 6 <= k <= 10
    y_i = alpha d_i + x_i' beta + gamma_i + xi_i,  beta_k = 10 for 1 <= k <= 5

with xi1_i, xi_i ~ N(0, 1) and shifts of size z triggered by control 11
(treatment) and control 6 (outcome) exceeding the normal (1 - eps)-quantile.
Indices above are 1-based; coefficients beyond p are dropped.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.stats import norm

from pyrobustlasso.exceptions import DataValidationError
from pyrobustlasso.models.dataset import Dataset, validate_dataset
from pyrobustlasso.solvers.sqrt_lasso import (
    DEFAULT_OUTER_ITERS,
    DEFAULT_PENALTY_C,
    SolverOptions,
)

FloatArray = NDArray[np.float64]

SIGNAL = 10.0
OUTCOME_CONTROLS = slice(0, 5)
TREATMENT_CONTROLS = slice(5, 10)
OUTCOME_TRIGGER = 5
TREATMENT_TRIGGER = 10
MIN_P_WITH_OUTLIERS = TREATMENT_TRIGGER + 1

PresetName = Literal["table1", "table2"]

_PRESETS: dict[str, dict[str, float | int]] = {
    "table1": {"n": 500, "p": 500, "eps": 0.005, "z": 20.0},
    "table2": {"n": 1000, "p": 1000, "eps": 0.0025, "z": 40.0},
}


class SimulationConfig(BaseModel):
    """
    Parameters of a Monte Carlo study.

    The design never states the value of alpha; bias and coverage are
    location-equivariant, so any fixed value works and 1.0 is the default.
    workers and batch_size only affect scheduling and logging and are left
    out of serialized reports.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(default=500, ge=2, description="Observations per replication")
    p: int = Field(default=500, ge=1, description="Number of controls")
    eps: float = Field(default=0.005, ge=0.0, lt=1.0, description="Outlier rate")
    z: float = Field(default=20.0, description="Outlier shift size")
    alpha_true: float = Field(default=1.0, description="True treatment effect")
    reps: int = Field(default=1000, ge=1, description="Replications")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Master seed")
    c_const: float = Field(default=DEFAULT_PENALTY_C, gt=1.0)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    outer_iters: int = Field(default=DEFAULT_OUTER_ITERS, ge=1)
    lasso_tol: float = Field(default=1e-8, gt=0)
    objective_tol: float = Field(default=1e-9, gt=0)
    include_biased_baseline: bool = Field(default=True)
    workers: int = Field(default=1, exclude=True)
    batch_size: int = Field(default=50, ge=1, exclude=True)

    @field_validator("workers")
    @classmethod
    def _check_workers(cls, value: int) -> int:
        if value == 0 or value < -1:
            raise ValueError("workers must be >= 1 or -1 (all cores)")
        return value

    @classmethod
    def preset(cls, name: PresetName, **overrides: object) -> "SimulationConfig":
        """
        Canonical settings: table1 (n=p=500, eps=0.005, z=20) or table2
        (n=p=1000, eps=0.0025, z=40).
        """
        if name not in _PRESETS:
            raise DataValidationError(f"Unknown preset '{name}'")
        values: dict[str, object] = dict(_PRESETS[name])
        values.update(overrides)
        return cls.model_validate(values)

    def solver_options(self) -> SolverOptions:
        """First-stage solver options for every replication."""
        return SolverOptions(
            max_outer_iters=self.outer_iters,
            lasso_tol=self.lasso_tol,
            objective_tol=self.objective_tol,
        )

    def check_design(self) -> None:
        """
        Raise DataValidationError when outliers are requested with p < 11.
        """
        if self.eps > 0 and self.p < MIN_P_WITH_OUTLIERS:
            raise DataValidationError(
                f"p must be >= {MIN_P_WITH_OUTLIERS} when eps > 0 "
                f"(outlier triggers read controls 6 and 11), got p={self.p}"
            )


@dataclass(frozen=True, eq=False)
class DgpTruth:
    """True parameters of one simulated sample."""

    alpha: float
    beta: FloatArray
    beta1: FloatArray
    gamma: FloatArray
    gamma1: FloatArray

    @property
    def n_outliers_outcome(self) -> int:
        return int(np.count_nonzero(self.gamma))

    @property
    def n_outliers_treatment(self) -> int:
        return int(np.count_nonzero(self.gamma1))


def replication_rng(seed: int, rep_index: int) -> np.random.Generator:
    """Independent generator keyed by (seed, rep_index)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(rep_index,))
    )


def generate_dgp(config: SimulationConfig, rep_index: int) -> tuple[Dataset, DgpTruth]:
    """
    Draw one sample of the simulation design.

    Args:
        config: Simulation parameters
        rep_index: Replication index; with config.seed it fully determines
            the draw

    Returns:
        (dataset, truth)

    Raises:
        DataValidationError: If eps > 0 and p < 11
    """
    config.check_design()
    n, p = config.n, config.p
    rng = replication_rng(config.seed, rep_index)

    X = rng.standard_normal((n, p))
    xi1 = rng.standard_normal(n)
    xi = rng.standard_normal(n)

    beta1 = np.zeros(p)
    beta1[TREATMENT_CONTROLS] = SIGNAL
    beta = np.zeros(p)
    beta[OUTCOME_CONTROLS] = SIGNAL

    if config.eps > 0:
        threshold = float(norm.ppf(1.0 - config.eps))
        gamma1 = np.where(X[:, TREATMENT_TRIGGER] >= threshold, config.z, 0.0)
        gamma = np.where(X[:, OUTCOME_TRIGGER] >= threshold, config.z, 0.0)
    else:
        gamma1 = np.zeros(n)
        gamma = np.zeros(n)

    d = X @ beta1 + gamma1 + xi1
    y = config.alpha_true * d + X @ beta + gamma + xi

    data = validate_dataset(y, d, X, treatment_names=("d",))
    truth = DgpTruth(
        alpha=config.alpha_true, beta=beta, beta1=beta1, gamma=gamma, gamma1=gamma1
    )
    return data, truth
