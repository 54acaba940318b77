"""Two-step estimator: robust first stages, then OLS on their residuals.

The second step regresses the outcome residual xi^0 on the treatment
residuals xi^1..xi^K. Its normal equations are the empirical version of a
Neyman-orthogonal moment, so first-stage estimation error only enters the
second step at higher order. Intervals use the homoscedastic asymptotic law
sqrt(n) (alpha_hat - alpha) -> N(0, sigma^2 Sigma_xi^{-1}) with normal (not
t) critical values and divisor n in sigma_hat^2.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm

from pyrobustlasso.exceptions import CollinearityError, DataValidationError
from pyrobustlasso.models.dataset import Dataset, PenaltyPlan, column_scaler
from pyrobustlasso.monitoring.logger import get_logger
from pyrobustlasso.monitoring.sentry_helper import log_non_convergence
from pyrobustlasso.solvers.sqrt_lasso import (
    FirstStageFit,
    SolverOptions,
    fit_first_stage,
)

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]

# Condition number of E'E beyond which interval widths are meaningless
COLLINEARITY_THRESHOLD = 1e12


@dataclass(frozen=True, eq=False)
class InferenceResult:
    """
    Second-step estimates and their asymptotic inference.

    Attributes:
        alpha_hat: Treatment effects, shape (K,)
        sigma_hat: Residual standard deviation of the second step
        sigma_xi_hat: (1/n) * E'E, shape (K, K)
        std_errors: sigma_hat * sqrt(diag(inv(sigma_xi_hat)) / n), shape (K,)
        ci_lower: Lower interval ends, shape (K,)
        ci_upper: Upper interval ends, shape (K,)
        z_stats: alpha_hat / std_errors, shape (K,)
        p_values: Two-sided normal p-values for alpha_k = 0, shape (K,)
        level: Confidence level of the intervals
        n: Number of observations
        first_stages: K+1 first-stage fits, outcome first
        treatment_names: Names of the K treatments
    """

    alpha_hat: FloatArray
    sigma_hat: float
    sigma_xi_hat: FloatArray
    std_errors: FloatArray
    ci_lower: FloatArray
    ci_upper: FloatArray
    z_stats: FloatArray
    p_values: FloatArray
    level: float
    n: int
    first_stages: tuple[FirstStageFit, ...]
    treatment_names: tuple[str, ...]

    @property
    def converged(self) -> bool:
        """Whether every first stage converged."""
        return all(fit.converged for fit in self.first_stages)

    @property
    def xi0(self) -> FloatArray:
        """Outcome residual from the first stage."""
        return self.first_stages[0].xi_hat

    @property
    def residual_matrix(self) -> FloatArray:
        """Treatment residuals as columns, shape (n, K)."""
        return np.column_stack([fit.xi_hat for fit in self.first_stages[1:]])


def ols_on_residuals(xi0: ArrayLike, E: ArrayLike) -> FloatArray:  # noqa: N803
    """
    Least squares of xi0 on the columns of E.

    Solved with an SVD-based least-squares driver rather than by inverting
    E'E. The condition number of E'E is (s_max / s_min)^2 in terms of the
    singular values of E.

    Args:
        xi0: Outcome residual, shape (n,)
        E: Treatment residuals, shape (n, K) with n > K

    Returns:
        alpha_hat, shape (K,)

    Raises:
        DataValidationError: If shapes are inconsistent or n <= K
        CollinearityError: If E'E is singular or its condition number
            exceeds COLLINEARITY_THRESHOLD
    """
    target = np.asarray(xi0, dtype=np.float64)
    E_arr = np.asarray(E, dtype=np.float64)
    if E_arr.ndim == 1:
        E_arr = E_arr.reshape(-1, 1)
    n, K = E_arr.shape
    if target.shape != (n,):
        raise DataValidationError(
            f"xi0 has shape {target.shape}, expected ({n},) to match E"
        )
    if n <= K:
        raise DataValidationError(f"Need n > K, got n={n}, K={K}")

    singular_values = np.linalg.svd(E_arr, compute_uv=False)
    s_max, s_min = float(singular_values[0]), float(singular_values[-1])
    if s_min == 0.0 or (s_max / s_min) ** 2 > COLLINEARITY_THRESHOLD:
        condition = math.inf if s_min == 0.0 else (s_max / s_min) ** 2
        raise CollinearityError(
            f"first-stage residuals collinear (condition number {condition:.3g})"
        )

    alpha, _, _, _ = scipy.linalg.lstsq(E_arr, target, lapack_driver="gelsd")
    return np.asarray(alpha, dtype=np.float64)


def _inverse_diagonal(sigma_xi_hat: FloatArray) -> FloatArray:
    try:
        factor = scipy.linalg.cho_factor(sigma_xi_hat)
    except np.linalg.LinAlgError as e:
        raise CollinearityError(f"Sigma_xi estimate is singular: {e}") from e
    identity = np.eye(sigma_xi_hat.shape[0])
    return np.diag(scipy.linalg.cho_solve(factor, identity))


def standard_errors(
    sigma_hat: float, sigma_xi_hat: ArrayLike, n: int
) -> FloatArray:
    """sigma_hat * sqrt(diag(inv(sigma_xi_hat)) / n)."""
    sigma_xi = np.atleast_2d(np.asarray(sigma_xi_hat, dtype=np.float64))
    return sigma_hat * np.sqrt(_inverse_diagonal(sigma_xi) / n)


def confidence_intervals(
    alpha_hat: ArrayLike,
    sigma_hat: float,
    sigma_xi_hat: ArrayLike,
    n: int,
    level: float = 0.95,
) -> tuple[FloatArray, FloatArray]:
    """
    Two-sided normal intervals alpha_hat_k -/+ z * se_k.

    Args:
        alpha_hat: Point estimates, shape (K,)
        sigma_hat: Second-step residual standard deviation
        sigma_xi_hat: Gram matrix of the treatment residuals over n
        n: Number of observations
        level: Confidence level in (0, 1)

    Returns:
        (lower, upper)

    Raises:
        DataValidationError: If level is outside (0, 1)
        CollinearityError: If sigma_xi_hat is singular
    """
    if not 0.0 < level < 1.0:
        raise DataValidationError(f"level must be in (0, 1), got {level}")
    alpha = np.atleast_1d(np.asarray(alpha_hat, dtype=np.float64))
    se = standard_errors(sigma_hat, sigma_xi_hat, n)
    z = float(norm.ppf((1.0 + level) / 2.0))
    return alpha - z * se, alpha + z * se


def orthogonal_moment(result: InferenceResult) -> FloatArray:
    """Empirical moment (1/n) * sum_i xi_i * (xi0_i - xi_i' alpha_hat)."""
    E = result.residual_matrix
    resid = result.xi0 - E @ result.alpha_hat
    return np.asarray(E.T @ resid / result.n, dtype=np.float64)


def _fit_all_first_stages(
    data: Dataset, plan: PenaltyPlan, opts: SolverOptions
) -> list[FirstStageFit]:
    scaler = column_scaler(data.X)
    tasks = [(data.outcome_name, data.y)] + [
        (name, np.ascontiguousarray(data.D[:, k]))
        for k, name in enumerate(data.treatment_names)
    ]

    def run(k: int) -> FirstStageFit:
        label, response = tasks[k]
        return fit_first_stage(
            response,
            data.X,
            scaler,
            plan.lambda_beta[k],
            plan.lambda_gamma[k],
            opts,
            label=label,
        )

    if opts.n_jobs == 1:
        return [run(k) for k in range(len(tasks))]

    # numpy releases the GIL inside the matrix-vector products
    fits = Parallel(n_jobs=opts.n_jobs, prefer="threads")(
        delayed(run)(k) for k in range(len(tasks))
    )
    return list(fits)


def two_step_fit(
    data: Dataset,
    plan: PenaltyPlan,
    opts: SolverOptions | None = None,
    level: float = 0.95,
    report_non_convergence: bool = True,
) -> InferenceResult:
    """
    Run the K+1 robust first stages and the orthogonal second step.

    Args:
        data: Validated dataset
        plan: Penalty levels, index 0 for the outcome regression
        opts: First-stage solver options
        level: Confidence level in (0, 1)
        report_non_convergence: Log a warning when a first stage stopped on
            its iteration budget (Monte Carlo runs aggregate instead)

    Returns:
        InferenceResult

    Raises:
        DataValidationError: If the plan does not cover K treatments or
            level is outside (0, 1)
        CollinearityError: If the treatment residuals are collinear
        SolverError: If a first stage produced non-finite values
    """
    opts = opts or SolverOptions()
    if plan.K != data.K:
        raise DataValidationError(
            f"Penalty plan covers {plan.K} treatments, dataset has {data.K}"
        )
    if not 0.0 < level < 1.0:
        raise DataValidationError(f"level must be in (0, 1), got {level}")

    fits = _fit_all_first_stages(data, plan, opts)
    n = data.n

    xi0 = fits[0].xi_hat
    E = np.column_stack([fit.xi_hat for fit in fits[1:]])
    alpha_hat = ols_on_residuals(xi0, E)

    resid = xi0 - E @ alpha_hat
    sigma_hat = math.sqrt(float(resid @ resid) / n)
    gram = E.T @ E / n
    sigma_xi_hat = 0.5 * (gram + gram.T)

    std_errors = standard_errors(sigma_hat, sigma_xi_hat, n)
    z_crit = float(norm.ppf((1.0 + level) / 2.0))
    ci_lower = alpha_hat - z_crit * std_errors
    ci_upper = alpha_hat + z_crit * std_errors

    with np.errstate(divide="ignore", invalid="ignore"):
        z_stats = np.where(
            std_errors > 0,
            alpha_hat / std_errors,
            np.where(alpha_hat == 0, 0.0, np.sign(alpha_hat) * np.inf),
        )
    p_values = 2.0 * norm.sf(np.abs(z_stats))

    result = InferenceResult(
        alpha_hat=alpha_hat,
        sigma_hat=sigma_hat,
        sigma_xi_hat=sigma_xi_hat,
        std_errors=std_errors,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        z_stats=z_stats,
        p_values=p_values,
        level=level,
        n=n,
        first_stages=tuple(fits),
        treatment_names=data.treatment_names,
    )

    not_converged = [fit.label for fit in fits if not fit.converged]
    if not_converged and report_non_convergence:
        log_non_convergence(
            "first_stage",
            labels=not_converged,
            max_outer_iters=opts.max_outer_iters,
        )

    logger.debug(
        "two_step_fit_finished",
        n=n,
        K=data.K,
        p=data.p,
        alpha_hat=alpha_hat.tolist(),
        sigma_hat=sigma_hat,
        converged=not not_converged,
    )
    return result
