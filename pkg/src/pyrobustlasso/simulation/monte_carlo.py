"""Monte Carlo harness: robust two-step estimator against the biased baseline.

Every replication draws its own data from (seed, rep_index), so results do
not depend on how replications are scheduled. Aggregates are computed over
records sorted by rep_index with math.fsum.
"""

import contextlib
import logging
import math
from collections.abc import Iterator, Sequence
from typing import Any

from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from pyrobustlasso.exceptions import CollinearityError, SimulationError, SolverError
from pyrobustlasso.inference.orthogonal import InferenceResult, two_step_fit
from pyrobustlasso.models.reports import (
    EstimatorSummary,
    MonteCarloReport,
    ReplicationRecord,
)
from pyrobustlasso.monitoring.logger import ensure_logging, get_logger
from pyrobustlasso.monitoring.sentry_helper import (
    capture_solver_failure,
    get_sentry_sdk,
)
from pyrobustlasso.monitoring.stats import ReplicationStatsCollector
from pyrobustlasso.simulation.dgp import SimulationConfig, generate_dgp
from pyrobustlasso.solvers.sqrt_lasso import SolverOptions, default_penalty_plan

logger = get_logger(__name__)

ROBUST = "robust"
BIASED = "biased"

# Fraction of failed replications above which the study is rejected
MAX_FAILURE_RATE = 0.05


def _covers(result: InferenceResult, alpha_true: float) -> bool:
    return bool(result.ci_lower[0] <= alpha_true <= result.ci_upper[0])


def run_replication(
    config: SimulationConfig, rep_index: int, opts: SolverOptions | None = None
) -> ReplicationRecord:
    """
    Draw one sample and fit the robust estimator (and the baseline).

    Solver and collinearity failures do not propagate: the record comes
    back with failed=True and the error message.

    Args:
        config: Simulation parameters
        rep_index: Replication index
        opts: First-stage options (config.solver_options() if None)

    Returns:
        ReplicationRecord
    """
    opts = opts or config.solver_options()
    data, truth = generate_dgp(config, rep_index)
    plan = default_penalty_plan(data.n, data.p, data.K, config.c_const)
    base: dict[str, Any] = {
        "rep_index": rep_index,
        "true_outliers_y": truth.n_outliers_outcome,
        "true_outliers_d": truth.n_outliers_treatment,
    }

    try:
        robust = two_step_fit(
            data, plan, opts, level=config.level, report_non_convergence=False
        )
        biased = None
        if config.include_biased_baseline:
            biased = two_step_fit(
                data,
                plan.without_outlier_penalty(),
                opts,
                level=config.level,
                report_non_convergence=False,
            )
    except (SolverError, CollinearityError) as e:
        return ReplicationRecord(failed=True, error=f"{type(e).__name__}: {e}", **base)

    fields = {
        "alpha_hat_robust": float(robust.alpha_hat[0]),
        "se_robust": float(robust.std_errors[0]),
        "ci_lo_robust": float(robust.ci_lower[0]),
        "ci_hi_robust": float(robust.ci_upper[0]),
        "hit_robust": _covers(robust, config.alpha_true),
        "converged_robust": robust.converged,
        "outliers_y_robust": int(robust.first_stages[0].outlier_set.size),
        "outliers_d_robust": int(robust.first_stages[1].outlier_set.size),
    }
    if biased is not None:
        fields.update(
            {
                "alpha_hat_biased": float(biased.alpha_hat[0]),
                "se_biased": float(biased.std_errors[0]),
                "ci_lo_biased": float(biased.ci_lower[0]),
                "ci_hi_biased": float(biased.ci_upper[0]),
                "hit_biased": _covers(biased, config.alpha_true),
                "converged_biased": biased.converged,
            }
        )
    return ReplicationRecord(**base, **fields)


def _replicate(
    config: SimulationConfig, rep_index: int, log_level: str
) -> ReplicationRecord:
    # Runs inside joblib workers
    ensure_logging(log_level)
    with threadpool_limits(limits=1, user_api="blas"):
        return run_replication(config, rep_index)


def summarize_estimator(
    estimator: str, records: Sequence[ReplicationRecord], alpha_true: float
) -> EstimatorSummary:
    """
    Bias, variance, MSE and coverage of one estimator.

    The variance uses divisor reps (not reps - 1), so mse = bias^2 + variance
    holds up to rounding.

    Args:
        estimator: "robust" or "biased"
        records: Replication records; failed ones are skipped
        alpha_true: True treatment effect

    Returns:
        EstimatorSummary

    Raises:
        SimulationError: If no replication completed
    """
    done = sorted((r for r in records if not r.failed), key=lambda r: r.rep_index)
    if not done:
        raise SimulationError(
            f"No completed replications for estimator '{estimator}'",
            failed=len(records),
            total=len(records),
        )

    def column(name: str) -> list[Any]:
        return [getattr(r, f"{name}_{estimator}") for r in done]

    alphas = [float(a) for a in column("alpha_hat")]
    lows = column("ci_lo")
    highs = column("ci_hi")
    reps = len(alphas)

    mean_alpha = math.fsum(alphas) / reps
    variance = math.fsum((a - mean_alpha) ** 2 for a in alphas) / reps
    mse = math.fsum((a - alpha_true) ** 2 for a in alphas) / reps

    return EstimatorSummary(
        estimator=estimator,
        bias=mean_alpha - alpha_true,
        variance=variance,
        mse=mse,
        coverage=sum(bool(h) for h in column("hit")) / reps,
        mean_alpha_hat=mean_alpha,
        mean_ci_length=math.fsum(hi - lo for lo, hi in zip(lows, highs)) / reps,
        not_converged=sum(not c for c in column("converged")),
    )


@contextlib.contextmanager
def _batch_span(first: int, size: int) -> Iterator[None]:
    sentry_sdk = get_sentry_sdk()
    if sentry_sdk is None:
        yield
        return
    with sentry_sdk.start_span(
        op="monte_carlo.batch",
        description=f"Replications {first}..{first + size - 1}",
    ):
        yield


def _record_batch(
    batch: Sequence[ReplicationRecord],
    stats: ReplicationStatsCollector,
    config: SimulationConfig,
) -> None:
    for record in batch:
        if record.failed:
            stats.get(ROBUST).record_failure()
            if config.include_biased_baseline:
                stats.get(BIASED).record_failure()
            capture_solver_failure(
                stage="replication",
                error_message=record.error or "unknown error",
                context={"rep_index": record.rep_index, "seed": config.seed},
            )
            continue
        stats.get(ROBUST).record(
            hit=bool(record.hit_robust), converged=bool(record.converged_robust)
        )
        if config.include_biased_baseline:
            stats.get(BIASED).record(
                hit=bool(record.hit_biased), converged=bool(record.converged_biased)
            )


def run_monte_carlo(config: SimulationConfig) -> MonteCarloReport:
    """
    Run config.reps replications and aggregate them per estimator.

    Replications are dispatched in batches of config.batch_size; with
    config.workers != 1 each batch is spread over joblib worker processes.
    The report is identical for any worker count.

    Args:
        config: Simulation parameters

    Returns:
        MonteCarloReport with per-replication records attached

    Raises:
        DataValidationError: If eps > 0 and p < 11
        SimulationError: If more than 5% of the replications failed
    """
    config.check_design()
    stats = ReplicationStatsCollector(total=config.reps)
    stats.get(ROBUST)
    if config.include_biased_baseline:
        stats.get(BIASED)

    logger.info(
        "monte_carlo_started",
        reps=config.reps,
        n=config.n,
        p=config.p,
        eps=config.eps,
        z=config.z,
        seed=config.seed,
        workers=config.workers,
    )

    log_level = logging.getLevelName(logging.getLogger().getEffectiveLevel())
    opts = config.solver_options()
    records: list[ReplicationRecord] = []

    # Single-threaded BLAS in every process keeps results independent of workers
    with contextlib.ExitStack() as stack:
        parallel = None
        if config.workers != 1:
            parallel = stack.enter_context(Parallel(n_jobs=config.workers))
        else:
            stack.enter_context(threadpool_limits(limits=1, user_api="blas"))

        for first in range(0, config.reps, config.batch_size):
            indices = range(first, min(first + config.batch_size, config.reps))
            with _batch_span(first, len(indices)):
                if parallel is None:
                    batch = [run_replication(config, i, opts) for i in indices]
                else:
                    batch = list(
                        parallel(
                            delayed(_replicate)(config, i, log_level) for i in indices
                        )
                    )
            _record_batch(batch, stats, config)
            records.extend(batch)
            stats.log_progress(done=len(records))

    records.sort(key=lambda r: r.rep_index)
    failed = sum(r.failed for r in records)
    if failed > MAX_FAILURE_RATE * config.reps:
        raise SimulationError(
            f"{failed} of {config.reps} replications failed "
            f"(more than {MAX_FAILURE_RATE:.0%})",
            failed=failed,
            total=config.reps,
        )

    estimators = {ROBUST: summarize_estimator(ROBUST, records, config.alpha_true)}
    if config.include_biased_baseline:
        estimators[BIASED] = summarize_estimator(BIASED, records, config.alpha_true)

    wall_time = stats.elapsed
    logger.info(
        "monte_carlo_finished",
        reps_completed=config.reps - failed,
        reps_failed=failed,
        wall_time=round(wall_time, 3),
        **{f"{name}_coverage": s.coverage for name, s in estimators.items()},
    )

    return MonteCarloReport(
        config=config,
        reps_completed=config.reps - failed,
        reps_failed=failed,
        estimators=estimators,
        wall_time=wall_time,
        records=records,
    )
