"""Pydantic schemas for the JSON and CSV reports.

Versioned with a top-level schema_version; matrices are row-major nested
lists and every number is a double.
"""

from typing import Any, Literal

from pydantic import BaseModel, Field

from pyrobustlasso.inference.orthogonal import InferenceResult
from pyrobustlasso.models.dataset import Dataset
from pyrobustlasso.simulation.dgp import SimulationConfig

SCHEMA_VERSION = 1


class FirstStageSummary(BaseModel):
    """One first-stage regression as reported by the fit command."""

    label: str = Field(..., description="Response of the regression")
    lambda_beta: float
    lambda_gamma: float
    sigma_hat_k: float = Field(..., description="sqrt(Q) at the solution")
    n_selected: int = Field(..., description="Number of nonzero coefficients")
    selected_controls: list[str]
    outlier_rows: list[int] = Field(..., description="0-based data rows")
    iterations: int
    converged: bool
    perfect_fit: bool
    objective_trace: list[float]


class FitReport(BaseModel):
    """Result of the fit command."""

    schema_version: Literal[1] = SCHEMA_VERSION
    outcome: str
    treatments: list[str]
    controls: list[str]
    n: int
    level: float
    alpha_hat: list[float]
    std_errors: list[float]
    ci_lower: list[float]
    ci_upper: list[float]
    z_stats: list[float]
    p_values: list[float]
    sigma_hat: float
    sigma_xi_hat: list[list[float]]
    converged: bool
    first_stages: list[FirstStageSummary]
    settings: dict[str, Any] = Field(
        default_factory=dict, description="Flags and defaults used for the fit"
    )

    @classmethod
    def from_result(
        cls,
        result: InferenceResult,
        data: Dataset,
        outcome: str,
        settings: dict[str, Any] | None = None,
    ) -> "FitReport":
        """Build the report from a two-step result and its dataset."""
        stages = [
            FirstStageSummary(
                label=fit.label,
                lambda_beta=fit.lambda_beta,
                lambda_gamma=fit.lambda_gamma,
                sigma_hat_k=fit.sigma_hat_k,
                n_selected=int(fit.selected.size),
                selected_controls=[data.control_names[j] for j in fit.selected],
                outlier_rows=[int(i) for i in fit.outlier_set],
                iterations=fit.iterations,
                converged=fit.converged,
                perfect_fit=fit.perfect_fit,
                objective_trace=list(fit.trace),
            )
            for fit in result.first_stages
        ]
        return cls(
            outcome=outcome,
            treatments=list(data.treatment_names),
            controls=list(data.control_names),
            n=result.n,
            level=result.level,
            alpha_hat=result.alpha_hat.tolist(),
            std_errors=result.std_errors.tolist(),
            ci_lower=result.ci_lower.tolist(),
            ci_upper=result.ci_upper.tolist(),
            z_stats=result.z_stats.tolist(),
            p_values=result.p_values.tolist(),
            sigma_hat=result.sigma_hat,
            sigma_xi_hat=result.sigma_xi_hat.tolist(),
            converged=result.converged,
            first_stages=stages,
            settings=settings or {},
        )


class ReplicationRecord(BaseModel):
    """Flat per-replication record (one CSV row)."""

    rep_index: int
    failed: bool = False
    error: str | None = None
    true_outliers_y: int = 0
    true_outliers_d: int = 0
    alpha_hat_robust: float | None = None
    se_robust: float | None = None
    ci_lo_robust: float | None = None
    ci_hi_robust: float | None = None
    hit_robust: bool | None = None
    converged_robust: bool | None = None
    outliers_y_robust: int | None = None
    outliers_d_robust: int | None = None
    alpha_hat_biased: float | None = None
    se_biased: float | None = None
    ci_lo_biased: float | None = None
    ci_hi_biased: float | None = None
    hit_biased: bool | None = None
    converged_biased: bool | None = None


class EstimatorSummary(BaseModel):
    """Monte Carlo aggregates of one estimator over completed replications."""

    estimator: str
    bias: float = Field(..., description="mean(alpha_hat) - alpha_true")
    variance: float = Field(..., description="Divisor reps, not reps - 1")
    mse: float = Field(..., ge=0.0)
    coverage: float = Field(..., ge=0.0, le=1.0)
    mean_alpha_hat: float
    mean_ci_length: float
    not_converged: int = Field(..., description="Replications with a stalled stage")


class MonteCarloReport(BaseModel):
    """Aggregated Monte Carlo results."""

    schema_version: Literal[1] = SCHEMA_VERSION
    config: SimulationConfig
    reps_completed: int
    reps_failed: int
    estimators: dict[str, EstimatorSummary]
    wall_time: float = Field(default=0.0, exclude=True)
    records: list[ReplicationRecord] = Field(default_factory=list, exclude=True)
