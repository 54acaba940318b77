"""JSON report files and plain-text result tables."""

from pathlib import Path

import pandas as pd
from pydantic import BaseModel

from pyrobustlasso.models.reports import FitReport, MonteCarloReport
from pyrobustlasso.storage.csv_data import FLOAT_FORMAT

TABLE_ROWS = ("bias", "var", "MSE", "Coverage")


def write_json_report(report: BaseModel, path: str | Path) -> Path:
    """
    Serialize a report model to JSON (fields marked exclude are dropped).

    Args:
        report: FitReport or MonteCarloReport
        path: Destination file

    Returns:
        The destination path
    """
    destination = Path(path)
    destination.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return destination


def fit_frame(report: FitReport) -> pd.DataFrame:
    """One row per treatment with estimate, standard error, interval and test."""
    return pd.DataFrame(
        {
            "treatment": report.treatments,
            "alpha_hat": report.alpha_hat,
            "std_error": report.std_errors,
            "ci_lower": report.ci_lower,
            "ci_upper": report.ci_upper,
            "z_stat": report.z_stats,
            "p_value": report.p_values,
        }
    )


def write_fit_csv(report: FitReport, path: str | Path) -> Path:
    """Write the coefficient table of a fit with 17 significant digits."""
    destination = Path(path)
    fit_frame(report).to_csv(
        destination, index=False, float_format=FLOAT_FORMAT, encoding="utf-8"
    )
    return destination


def monte_carlo_frame(report: MonteCarloReport) -> pd.DataFrame:
    """Rows bias/var/MSE/Coverage, one column per estimator."""
    return pd.DataFrame(
        {
            name: [summary.bias, summary.variance, summary.mse, summary.coverage]
            for name, summary in report.estimators.items()
        },
        index=list(TABLE_ROWS),
    )


def format_monte_carlo_table(report: MonteCarloReport) -> str:
    """
    Render the Monte Carlo summary as a text table.

    Args:
        report: Aggregated Monte Carlo results

    Returns:
        Settings line followed by the bias/var/MSE/Coverage table
    """
    config = report.config
    heading = (
        f"n={config.n} p={config.p} eps={config.eps:g} z={config.z:g} "
        f"reps={config.reps} completed={report.reps_completed} "
        f"failed={report.reps_failed} seed={config.seed}"
    )
    table = monte_carlo_frame(report).to_string(float_format=lambda v: f"{v:.4g}")
    return f"{heading}\n{table}\n"
