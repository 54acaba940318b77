"""Convex kernels: soft-thresholding and weighted lasso by coordinate descent.

The lasso kernel minimizes

    (1/n) * ||response - design @ b||^2 + lam * sum_j weights_j * |b_j|

by cyclic coordinate descent with an in-place residual. Convergence is
certified by the maximum violation of the subgradient (KKT) conditions,
not by coefficient change.
"""

from dataclasses import dataclass, field
from typing import overload

import numpy as np
from numpy.typing import NDArray

from pyrobustlasso.exceptions import DataValidationError, SolverError
from pyrobustlasso.monitoring.logger import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]

DEFAULT_LASSO_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 1000

# Relative slack for the per-sweep objective monotonicity check
_MONOTONE_SLACK = 1e-12


@overload
def soft_threshold(r: float, tau: float) -> float: ...


@overload
def soft_threshold(r: FloatArray, tau: float | FloatArray) -> FloatArray: ...


def soft_threshold(
    r: float | FloatArray, tau: float | FloatArray
) -> float | FloatArray:
    """
    Proximal map of tau * |.|: sign(r) * max(|r| - tau, 0).

    Args:
        r: Scalar or array of finite values
        tau: Threshold(s), >= 0

    Returns:
        Thresholded value(s), same shape as r
    """
    if np.isscalar(r) and np.isscalar(tau):
        r_f, tau_f = float(r), float(tau)  # type: ignore[arg-type]
        if abs(r_f) <= tau_f:
            return 0.0
        return r_f - tau_f if r_f > 0 else r_f + tau_f
    r_arr = np.asarray(r, dtype=np.float64)
    shrunk = np.maximum(np.abs(r_arr) - tau, 0.0)
    return np.sign(r_arr) * shrunk


@dataclass(frozen=True, eq=False)
class LassoProblem:
    """
    One weighted lasso instance.

    Attributes:
        design: Matrix, shape (n, p)
        response: Vector, shape (n,)
        weights: Per-coefficient penalty multipliers, shape (p,), >= 0
        lam: Overall penalty level, >= 0
        tol: KKT tolerance, > 0
        max_sweeps: Sweep budget, >= 1
        warm_start: Optional starting coefficients, shape (p,)
    """

    design: FloatArray
    response: FloatArray
    weights: FloatArray
    lam: float
    tol: float = DEFAULT_LASSO_TOL
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    warm_start: FloatArray | None = None

    def __post_init__(self) -> None:
        n, p = self.design.shape
        if self.response.shape != (n,):
            raise DataValidationError(
                f"response has shape {self.response.shape}, expected ({n},)"
            )
        if self.weights.shape != (p,):
            raise DataValidationError(
                f"weights has shape {self.weights.shape}, expected ({p},)"
            )
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise DataValidationError("weights must be finite and >= 0")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DataValidationError(f"lam must be finite and >= 0, got {self.lam}")
        if self.tol <= 0:
            raise DataValidationError(f"tol must be > 0, got {self.tol}")
        if self.max_sweeps < 1:
            raise DataValidationError(
                f"max_sweeps must be >= 1, got {self.max_sweeps}"
            )
        if self.warm_start is not None and self.warm_start.shape != (p,):
            raise DataValidationError(
                f"warm_start has shape {self.warm_start.shape}, expected ({p},)"
            )


@dataclass(frozen=True, eq=False)
class LassoSolution:
    """
    Result of lasso_fit.

    Attributes:
        coef: Coefficients, shape (p,)
        sweeps_used: Coordinate sweeps performed (full and active-set)
        max_kkt_violation: Largest KKT violation at the returned point
        converged: max_kkt_violation <= tol
        objective_trace: Objective value before the first sweep and after
            every sweep
    """

    coef: FloatArray
    sweeps_used: int
    max_kkt_violation: float
    converged: bool
    objective_trace: list[float] = field(default_factory=list)


def lasso_objective(
    design: FloatArray,
    response: FloatArray,
    coef: FloatArray,
    weights: FloatArray,
    lam: float,
) -> float:
    """Evaluate (1/n)||response - design @ coef||^2 + lam * sum(weights*|coef|)."""
    n = response.shape[0]
    resid = response - design @ coef
    return float(resid @ resid / n + lam * np.sum(weights * np.abs(coef)))


def lasso_kkt_violation(
    design: FloatArray,
    resid: FloatArray,
    coef: FloatArray,
    weights: FloatArray,
    lam: float,
) -> FloatArray:
    """
    Per-coordinate violation of the lasso subgradient conditions.

    With g_j = (2/n) * design[:, j] @ resid the conditions are
    g_j = lam * w_j * sign(b_j) for b_j != 0 and |g_j| <= lam * w_j for
    b_j = 0. Zero columns are pinned at 0 and report no violation.

    Args:
        design: Matrix, shape (n, p)
        resid: Residual response - design @ coef, shape (n,)
        coef: Coefficients, shape (p,)
        weights: Penalty multipliers, shape (p,)
        lam: Overall penalty level

    Returns:
        Nonnegative violations, shape (p,)
    """
    n = resid.shape[0]
    grad = (2.0 / n) * (design.T @ resid)
    pen = lam * weights
    viol = np.where(
        coef != 0,
        np.abs(grad - pen * np.sign(coef)),
        np.maximum(np.abs(grad) - pen, 0.0),
    )
    zero_cols = ~np.any(design != 0, axis=0)
    viol[zero_cols] = 0.0
    return viol


def _sweep(
    design: FloatArray,
    resid: FloatArray,
    coef: FloatArray,
    coords: NDArray[np.intp],
    col_sq: FloatArray,
    half_pen: FloatArray,
    n: int,
) -> float:
    """One cyclic pass over ``coords``; returns the largest coefficient move."""
    biggest = 0.0
    for j in coords:
        a = col_sq[j]
        old = coef[j]
        col = design[:, j]
        rho = float(col @ resid) / n + a * old
        shrunk = abs(rho) - half_pen[j]
        new = (shrunk if rho > 0 else -shrunk) / a if shrunk > 0 else 0.0
        if new != old:
            resid -= (new - old) * col
            coef[j] = new
            biggest = max(biggest, abs(new - old))
    return biggest


def lasso_fit(problem: LassoProblem) -> LassoSolution:
    """
    Solve a weighted lasso by cyclic coordinate descent.

    Strategy: a full sweep over all free coordinates, then repeated sweeps
    over the current nonzero set until its moves stall, then a full KKT
    check; repeat until the largest violation is within tol. Every sweep
    decreases the objective, so the last iterate is the best one.

    Args:
        problem: Validated lasso instance

    Returns:
        LassoSolution; converged=False when the sweep budget ran out

    Raises:
        SolverError: If a non-finite value appears in the residual
    """
    design = np.asfortranarray(problem.design, dtype=np.float64)
    response = problem.response
    n, p = design.shape
    weights = problem.weights
    lam = float(problem.lam)

    col_sq = np.einsum("ij,ij->j", design, design) / n
    free = np.flatnonzero(col_sq > 0)
    pen = lam * weights
    half_pen = pen / 2.0

    coef = np.zeros(p)
    if problem.warm_start is not None:
        coef[free] = problem.warm_start[free]
    resid = response - design @ coef

    def objective() -> float:
        return float(resid @ resid / n + np.sum(pen * np.abs(coef)))

    trace = [objective()]
    sweeps = 0
    violation = np.inf

    def record_sweep() -> None:
        nonlocal sweeps
        sweeps += 1
        if not np.all(np.isfinite(resid)):
            raise SolverError(f"Non-finite residual after lasso sweep {sweeps}")
        value = objective()
        if value > trace[-1] + _MONOTONE_SLACK * (1.0 + abs(trace[-1])):
            logger.warning(
                "lasso_objective_increase",
                sweep=sweeps,
                previous=trace[-1],
                current=value,
            )
        trace.append(value)

    if p == 0 or free.size == 0:
        return LassoSolution(
            coef=coef,
            sweeps_used=0,
            max_kkt_violation=0.0,
            converged=True,
            objective_trace=trace,
        )

    while sweeps < problem.max_sweeps:
        _sweep(design, resid, coef, free, col_sq, half_pen, n)
        record_sweep()

        # Inner loop over the active set
        while sweeps < problem.max_sweeps:
            active = free[coef[free] != 0]
            if active.size == 0:
                break
            moved = _sweep(design, resid, coef, active, col_sq, half_pen, n)
            record_sweep()
            # A move of delta shifts gradients by at most 2 * a_j * delta
            if 2.0 * col_sq[active].max() * moved <= 0.1 * problem.tol:
                break

        # Refresh the residual to shed accumulated rounding
        resid[:] = response - design @ coef
        violation = float(
            lasso_kkt_violation(design, resid, coef, weights, lam).max()
        )
        if violation <= problem.tol:
            return LassoSolution(
                coef=coef,
                sweeps_used=sweeps,
                max_kkt_violation=violation,
                converged=True,
                objective_trace=trace,
            )

    logger.warning(
        "lasso_not_converged",
        sweeps=sweeps,
        max_kkt_violation=violation,
        tol=problem.tol,
    )
    return LassoSolution(
        coef=coef,
        sweeps_used=sweeps,
        max_kkt_violation=violation,
        converged=False,
        objective_trace=trace,
    )
