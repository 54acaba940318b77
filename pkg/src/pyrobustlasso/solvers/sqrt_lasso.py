"""Outlier-robust square-root lasso first stage.

For a response r (the outcome or one treatment) the first stage solves

    min_{b, c}  sqrt(Q(b, c)) + (lambda_beta/n) * ||Psi b||_1
                + (lambda_gamma/n) * ||c||_1,
    Q(b, c) = (1/n) * ||r - X b - c||^2,

through its jointly convex reformulation in (b, c, s)

    s/2 + Q(b, c)/(2s) + (lambda_beta/n) * ||Psi b||_1
        + (lambda_gamma/n) * ||c||_1,

minimized block by block:

1. b: weighted lasso on (X, r - c) with penalty 2 * lambda_beta * s / n
2. c: c_i = soft_threshold(r_i - x_i'b, lambda_gamma * s)
3. s: s = max(sqrt(Q(b, c)), s_floor)

Each step minimizes the joint objective over one block, so the first-stage
objective evaluated at the iterates never increases.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field

from pyrobustlasso.exceptions import DataValidationError, SolverError
from pyrobustlasso.models.dataset import ColumnScaler, PenaltyPlan
from pyrobustlasso.monitoring.logger import get_logger
from pyrobustlasso.solvers.prox import (
    DEFAULT_LASSO_TOL,
    DEFAULT_MAX_SWEEPS,
    LassoProblem,
    lasso_fit,
    lasso_kkt_violation,
    soft_threshold,
)

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]

DEFAULT_PENALTY_C = 1.01
DEFAULT_OUTER_ITERS = 10

# Relative slack for the outer objective monotonicity check
_OUTER_MONOTONE_SLACK = 1e-10


class SolverOptions(BaseModel):
    """Options for the alternating first-stage solver."""

    model_config = ConfigDict(frozen=True)

    max_outer_iters: int = Field(
        default=DEFAULT_OUTER_ITERS, ge=1, description="Outer (b, c, s) iterations"
    )
    objective_tol: float = Field(
        default=1e-9, gt=0, description="Stop when the objective drops by less"
    )
    s_floor: float = Field(
        default=1e-10, gt=0, description="Lower clamp on the noise level s"
    )
    lasso_tol: float = Field(
        default=DEFAULT_LASSO_TOL, gt=0, description="KKT tolerance of the b-step"
    )
    lasso_max_sweeps: int = Field(
        default=DEFAULT_MAX_SWEEPS, ge=1, description="Sweep budget of the b-step"
    )
    n_jobs: int = Field(
        default=1, description="Parallel first stages (joblib semantics, -1 = all)"
    )


@dataclass(frozen=True, eq=False)
class FirstStageFit:
    """
    Result of one penalized first-stage regression.

    Attributes:
        label: Response name ("y" or the treatment name)
        beta_hat: Control coefficients, shape (p,)
        gamma_hat: Outlier shifts, shape (n,)
        xi_hat: Residual response - X @ beta_hat - gamma_hat, shape (n,)
        sigma_hat_k: sqrt(Q(beta_hat, gamma_hat))
        lambda_beta: Penalty on the coefficients
        lambda_gamma: Penalty on the shifts (0 = shifts disabled)
        trace: First-stage objective at the start and after each iteration
        converged: Objective decrease fell below objective_tol (or the fit
            is perfect)
        perfect_fit: sqrt(Q) dropped below s_floor
        iterations: Outer iterations performed
        lasso_sweeps: Coordinate sweeps summed over all b-steps
        lasso_converged: Every b-step met its KKT tolerance
    """

    label: str
    beta_hat: FloatArray
    gamma_hat: FloatArray
    xi_hat: FloatArray
    sigma_hat_k: float
    lambda_beta: float
    lambda_gamma: float
    trace: list[float] = field(default_factory=list)
    converged: bool = True
    perfect_fit: bool = False
    iterations: int = 0
    lasso_sweeps: int = 0
    lasso_converged: bool = True

    @property
    def outlier_set(self) -> NDArray[np.intp]:
        """Row indices with a nonzero estimated shift."""
        return np.flatnonzero(self.gamma_hat != 0)

    @property
    def selected(self) -> NDArray[np.intp]:
        """Control indices with a nonzero coefficient."""
        return np.flatnonzero(self.beta_hat != 0)


def default_penalties(
    n: int, p: int, c_const: float = DEFAULT_PENALTY_C
) -> tuple[float, float]:
    """
    Theory-driven penalty levels.

    lambda_beta = 2c * sqrt(n) * sqrt(2 log p) and
    lambda_gamma = 2c * sqrt(2 log n); with c = 1.01 the factor is 2.02.

    Args:
        n: Number of observations (>= 2)
        p: Number of controls (p = 0 gives lambda_beta = 0)
        c_const: Slack constant, > 1

    Returns:
        (lambda_beta, lambda_gamma)

    Raises:
        DataValidationError: If n < 2, p < 0 or c_const <= 1
    """
    if n < 2:
        raise DataValidationError(f"n must be >= 2, got {n}")
    if p < 0:
        raise DataValidationError(f"p must be >= 0, got {p}")
    if not c_const > 1:
        raise DataValidationError(f"c_const must be > 1, got {c_const}")

    lambda_beta = 0.0 if p == 0 else 2 * c_const * math.sqrt(n * 2 * math.log(p))
    lambda_gamma = 2 * c_const * math.sqrt(2 * math.log(n))
    return lambda_beta, lambda_gamma


def default_penalty_plan(
    n: int, p: int, K: int, c_const: float = DEFAULT_PENALTY_C  # noqa: N803
) -> PenaltyPlan:
    """Same default penalty pair for the outcome and all K treatment regressions."""
    lambda_beta, lambda_gamma = default_penalties(n, p, c_const)
    return PenaltyPlan(
        lambda_beta=(lambda_beta,) * (K + 1),
        lambda_gamma=(lambda_gamma,) * (K + 1),
        c_const=c_const,
    )


def _design_matrix(X: ArrayLike, n: int) -> FloatArray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        # A length-n vector is one control; an empty vector means none
        arr = arr.reshape(-1, 1) if arr.size else np.zeros((n, 0))
    return arr


def first_stage_objective(
    b: ArrayLike,
    c: ArrayLike,
    response: ArrayLike,
    X: ArrayLike,
    scaler: ColumnScaler,
    lambda_beta: float,
    lambda_gamma: float,
) -> float:
    """
    sqrt(Q(b, c)) + (lambda_beta/n) sum_j psi_j |b_j| + (lambda_gamma/n) sum_i |c_i|.

    Args:
        b: Control coefficients, shape (p,)
        c: Outlier shifts, shape (n,)
        response: Response vector, shape (n,)
        X: Control matrix, shape (n, p)
        scaler: Column loadings of X
        lambda_beta: Coefficient penalty
        lambda_gamma: Shift penalty

    Returns:
        Objective value
    """
    b_arr = np.asarray(b, dtype=np.float64)
    c_arr = np.asarray(c, dtype=np.float64)
    r = np.asarray(response, dtype=np.float64)
    n = r.shape[0]
    X_arr = _design_matrix(X, n)

    resid = r - X_arr @ b_arr - c_arr
    root_q = math.sqrt(float(resid @ resid) / n)
    beta_pen = lambda_beta / n * float(np.sum(scaler.psi * np.abs(b_arr)))
    gamma_pen = lambda_gamma / n * float(np.sum(np.abs(c_arr)))
    return root_q + beta_pen + gamma_pen


def _root_mean_square(values: FloatArray) -> float:
    return math.sqrt(float(values @ values) / values.shape[0])


def fit_first_stage(
    response: ArrayLike,
    X: ArrayLike,
    scaler: ColumnScaler,
    lambda_beta: float,
    lambda_gamma: float,
    opts: SolverOptions | None = None,
    label: str = "y",
) -> FirstStageFit:
    """
    Fit the outlier-robust square-root lasso by alternating minimization.

    Starts from b = 0, c = 0, s = sqrt(Q(0, 0)) and stops when the objective
    decreases by less than opts.objective_tol or after opts.max_outer_iters
    iterations, whichever comes first. lambda_gamma = 0 disables the shifts
    (c stays 0), which yields the plain square-root lasso.

    Args:
        response: Response vector, shape (n,)
        X: Control matrix, shape (n, p); p may be 0
        scaler: Column loadings of X
        lambda_beta: Coefficient penalty, >= 0
        lambda_gamma: Shift penalty, >= 0
        opts: Solver options (defaults if None)
        label: Name carried into the result and log events

    Returns:
        FirstStageFit

    Raises:
        DataValidationError: On shape mismatch or negative penalties
        SolverError: If a non-finite intermediate value appears
    """
    opts = opts or SolverOptions()
    r = np.asarray(response, dtype=np.float64)
    n = r.shape[0]
    X_arr = np.asfortranarray(_design_matrix(X, n))
    p = X_arr.shape[1]

    if X_arr.shape[0] != n:
        raise DataValidationError(
            f"response has {n} rows but X has {X_arr.shape[0]} rows"
        )
    if scaler.psi.shape != (p,):
        raise DataValidationError(
            f"scaler has {scaler.psi.shape[0]} loadings but X has {p} columns"
        )
    if lambda_beta < 0 or lambda_gamma < 0:
        raise DataValidationError("penalty levels must be >= 0")

    psi = np.asarray(scaler.psi, dtype=np.float64)
    use_shifts = lambda_gamma > 0

    b = np.zeros(p)
    c = np.zeros(n)
    trace = [first_stage_objective(b, c, r, X_arr, scaler, lambda_beta, lambda_gamma)]
    s = _root_mean_square(r)

    if s < opts.s_floor:
        # All-zero response: the zero fit is optimal
        return FirstStageFit(
            label=label,
            beta_hat=b,
            gamma_hat=c,
            xi_hat=r - X_arr @ b - c,
            sigma_hat_k=s,
            lambda_beta=lambda_beta,
            lambda_gamma=lambda_gamma,
            trace=trace,
            converged=True,
            perfect_fit=True,
        )

    converged = False
    perfect_fit = False
    iterations = 0
    sweeps = 0
    lasso_converged = True
    resid = r.copy()

    for _ in range(opts.max_outer_iters):
        # Step 1: weighted lasso in b at fixed (c, s)
        solution = lasso_fit(
            LassoProblem(
                design=X_arr,
                response=r - c,
                weights=psi,
                lam=2.0 * lambda_beta * s / n,
                tol=opts.lasso_tol,
                max_sweeps=opts.lasso_max_sweeps,
                warm_start=b,
            )
        )
        b = solution.coef
        sweeps += solution.sweeps_used
        lasso_converged = lasso_converged and solution.converged

        # Step 2: closed-form shifts at fixed (b, s)
        fitted_resid = r - X_arr @ b
        if use_shifts:
            c = soft_threshold(fitted_resid, lambda_gamma * s)
        resid = fitted_resid - c
        if not np.all(np.isfinite(resid)):
            raise SolverError(f"Non-finite residual in first stage '{label}'")

        # Step 3: noise level
        root_q = _root_mean_square(resid)
        iterations += 1

        value = first_stage_objective(
            b, c, r, X_arr, scaler, lambda_beta, lambda_gamma
        )
        previous = trace[-1]
        if value > previous + _OUTER_MONOTONE_SLACK * (1.0 + abs(previous)):
            logger.warning(
                "outer_objective_increase",
                label=label,
                iteration=iterations,
                previous=previous,
                current=value,
            )
        trace.append(value)

        if root_q < opts.s_floor:
            perfect_fit = True
            converged = True
            s = root_q
            break
        s = root_q

        if previous - value < opts.objective_tol:
            converged = True
            break

    fit = FirstStageFit(
        label=label,
        beta_hat=b,
        gamma_hat=c,
        xi_hat=resid,
        sigma_hat_k=_root_mean_square(resid),
        lambda_beta=lambda_beta,
        lambda_gamma=lambda_gamma,
        trace=trace,
        converged=converged,
        perfect_fit=perfect_fit,
        iterations=iterations,
        lasso_sweeps=sweeps,
        lasso_converged=lasso_converged,
    )
    logger.debug(
        "first_stage_fit_finished",
        label=label,
        iterations=iterations,
        converged=converged,
        perfect_fit=perfect_fit,
        sigma_hat=fit.sigma_hat_k,
        n_selected=int(fit.selected.size),
        n_outliers=int(fit.outlier_set.size),
        objective=trace[-1],
    )
    return fit


def first_stage_kkt_violation(
    fit: FirstStageFit,
    response: ArrayLike,
    X: ArrayLike,
    scaler: ColumnScaler,
) -> tuple[float, float]:
    """
    Fixed-point optimality check of a first-stage fit.

    Both blocks are checked at s = fit.sigma_hat_k in the units of the
    lasso kernel ((2/n) times a residual inner product):

    - b-block: lasso KKT conditions on (X, response - gamma_hat) with
      penalty 2 * lambda_beta * s / n and weights psi
    - c-block: xi_i = lambda_gamma * s * sign(gamma_i) where gamma_i != 0 and
      |xi_i| <= lambda_gamma * s where gamma_i = 0 (skipped when the shifts
      are disabled)

    Args:
        fit: First-stage result
        response: Response vector the fit was computed on
        X: Control matrix the fit was computed on
        scaler: Column loadings of X

    Returns:
        (b-block violation, c-block violation)
    """
    r = np.asarray(response, dtype=np.float64)
    n = r.shape[0]
    X_arr = _design_matrix(X, n)
    s = fit.sigma_hat_k
    xi = r - X_arr @ fit.beta_hat - fit.gamma_hat

    b_violation = 0.0
    if X_arr.shape[1] > 0:
        b_violation = float(
            lasso_kkt_violation(
                X_arr, xi, fit.beta_hat, scaler.psi, 2.0 * fit.lambda_beta * s / n
            ).max()
        )

    c_violation = 0.0
    if fit.lambda_gamma > 0:
        tau = fit.lambda_gamma * s
        viol = np.where(
            fit.gamma_hat != 0,
            np.abs(xi - tau * np.sign(fit.gamma_hat)),
            np.maximum(np.abs(xi) - tau, 0.0),
        )
        c_violation = float((2.0 / n) * viol.max())

    return b_violation, c_violation
