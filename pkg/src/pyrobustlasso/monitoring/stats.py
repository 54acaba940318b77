"""Progress statistics for Monte Carlo replications."""

import time
from dataclasses import dataclass, field

import structlog

logger = structlog.get_logger(__name__)


@dataclass
class EstimatorStats:
    """Running counters for a single estimator ("robust", "biased")."""

    estimator: str
    completed: int = 0
    failed: int = 0
    hits: int = 0
    not_converged: int = 0

    def record(self, hit: bool, converged: bool) -> None:
        """
        Record a completed replication.

        Args:
            hit: Whether the confidence interval covered the true value
            converged: Whether all first stages converged
        """
        self.completed += 1
        if hit:
            self.hits += 1
        if not converged:
            self.not_converged += 1

    def record_failure(self) -> None:
        """Record a failed replication."""
        self.failed += 1

    @property
    def running_coverage(self) -> float | None:
        """Coverage over the replications completed so far."""
        if self.completed == 0:
            return None
        return self.hits / self.completed


@dataclass
class ReplicationStatsCollector:
    """Collect and periodically log progress across estimators."""

    total: int
    estimators: dict[str, EstimatorStats] = field(default_factory=dict)
    started_at: float = field(default_factory=time.perf_counter)

    def get(self, estimator: str) -> EstimatorStats:
        """
        Get statistics for an estimator (creates if doesn't exist).

        Args:
            estimator: Estimator name

        Returns:
            EstimatorStats for the estimator
        """
        if estimator not in self.estimators:
            self.estimators[estimator] = EstimatorStats(estimator=estimator)
        return self.estimators[estimator]

    @property
    def elapsed(self) -> float:
        """Seconds since the collector was created."""
        return time.perf_counter() - self.started_at

    def log_progress(self, done: int) -> None:
        """
        Log a progress event after a batch of replications.

        Args:
            done: Replications processed so far (completed or failed)
        """
        elapsed = self.elapsed
        throughput = done / elapsed if elapsed > 0 else 0.0
        fields: dict[str, object] = {}
        for name, stats in self.estimators.items():
            fields[f"{name}_completed"] = stats.completed
            fields[f"{name}_failed"] = stats.failed
            coverage = stats.running_coverage
            if coverage is not None:
                fields[f"{name}_coverage"] = round(coverage, 4)

        logger.info(
            "monte_carlo_progress",
            done=done,
            total=self.total,
            reps_per_sec=round(throughput, 3),
            **fields,
        )
