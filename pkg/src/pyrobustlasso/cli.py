"""Command-line front end: fit, simulate, version.

Exit codes: 0 success, 1 invalid input or flags, 2 solver failure or too
many failed replications, 3 collinear first-stage residuals.
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Literal, NoReturn

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from pyrobustlasso import __version__
from pyrobustlasso.exceptions import (
    CollinearityError,
    DataValidationError,
    RobustLassoError,
    SimulationError,
    SolverError,
)
from pyrobustlasso.inference.orthogonal import two_step_fit
from pyrobustlasso.models.dataset import Dataset, PenaltyPlan
from pyrobustlasso.models.reports import FitReport, MonteCarloReport
from pyrobustlasso.monitoring.logger import configure_logging, get_logger
from pyrobustlasso.monitoring.sentry_helper import capture_solver_failure
from pyrobustlasso.simulation.dgp import SimulationConfig
from pyrobustlasso.simulation.monte_carlo import run_monte_carlo
from pyrobustlasso.solvers.sqrt_lasso import (
    DEFAULT_OUTER_ITERS,
    DEFAULT_PENALTY_C,
    SolverOptions,
    default_penalties,
)
from pyrobustlasso.storage.csv_data import (
    FLOAT_FORMAT,
    REST,
    read_dataset_csv,
    write_replications_csv,
)
from pyrobustlasso.storage.reports import (
    fit_frame,
    format_monte_carlo_table,
    write_fit_csv,
    write_json_report,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2
EXIT_COLLINEAR = 3


class UsageError(DataValidationError):
    """Raised for malformed command lines."""


class FitRequest(BaseModel):
    """Everything the fit command needs, validated before any file is read."""

    model_config = ConfigDict(frozen=True)

    data: Path
    outcome: str = Field(..., min_length=1)
    treatments: tuple[str, ...] = Field(..., min_length=1)
    controls: tuple[str, ...] | Literal["rest"] = REST
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    penalty_c: float = Field(default=DEFAULT_PENALTY_C, gt=1.0)
    lambda_beta: tuple[float, ...] | None = None
    lambda_gamma: tuple[float, ...] | None = None
    solver: SolverOptions = Field(default_factory=SolverOptions)
    out: Path | None = None
    format: Literal["json", "csv"] = "json"

    @model_validator(mode="after")
    def _check_roles(self) -> "FitRequest":
        roles = [self.outcome, *self.treatments]
        if self.controls != REST:
            roles.extend(self.controls)
        if len(set(roles)) != len(roles):
            raise ValueError("outcome, treatment and control columns must be disjoint")
        return self


def _expand_levels(
    values: tuple[float, ...] | None, default: float, K: int, flag: str  # noqa: N803
) -> tuple[float, ...]:
    if values is None:
        return (default,) * (K + 1)
    if len(values) == 1:
        return values * (K + 1)
    if len(values) == K + 1:
        return values
    raise DataValidationError(
        f"{flag} takes 1 or K+1 = {K + 1} values, got {len(values)}"
    )


def resolve_penalty_plan(request: FitRequest, data: Dataset) -> PenaltyPlan:
    """
    Penalty plan for a fit: defaults, with per-flag overrides.

    A single override value applies to all K+1 first stages; K+1 values are
    taken in order (outcome first).
    """
    default_beta, default_gamma = default_penalties(data.n, data.p, request.penalty_c)
    return PenaltyPlan(
        lambda_beta=_expand_levels(
            request.lambda_beta, default_beta, data.K, "--lambda-beta"
        ),
        lambda_gamma=_expand_levels(
            request.lambda_gamma, default_gamma, data.K, "--lambda-gamma"
        ),
        c_const=request.penalty_c,
    )


def build_fit_report(request: FitRequest) -> FitReport:
    """
    Read the CSV, run the two-step fit and assemble the report.

    Raises:
        DataValidationError: On unreadable or invalid input
        SolverError: If a first stage failed numerically
        CollinearityError: If the treatment residuals are collinear
    """
    controls = REST if request.controls == REST else list(request.controls)
    data = read_dataset_csv(
        request.data, request.outcome, list(request.treatments), controls
    )
    plan = resolve_penalty_plan(request, data)
    result = two_step_fit(data, plan, request.solver, level=request.level)

    settings: dict[str, Any] = request.model_dump(mode="json", exclude={"out"})
    settings["lambda_beta"] = list(plan.lambda_beta)
    settings["lambda_gamma"] = list(plan.lambda_gamma)
    return FitReport.from_result(result, data, request.outcome, settings)


def exit_code_for(error: Exception) -> int:
    """Map an exception to the documented process exit code."""
    if isinstance(error, CollinearityError):
        return EXIT_COLLINEAR
    if isinstance(error, (SolverError, SimulationError)):
        return EXIT_SOLVER
    return EXIT_INVALID


def cmd_fit(request: FitRequest) -> int:
    """
    Fit a model from CSV and write the report.

    Without --out the JSON report goes to stdout. With --out the report is
    written there and a coefficient table is printed.

    Returns:
        Process exit code
    """
    try:
        report = build_fit_report(request)
    except (SolverError, CollinearityError) as e:
        capture_solver_failure(
            stage="fit",
            error_message=str(e),
            context={"data": str(request.data), "treatments": list(request.treatments)},
            exception=e,
        )
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except RobustLassoError as e:
        logger.error("fit_command_failed", error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)

    if request.out is None:
        if request.format == "csv":
            table = fit_frame(report).to_csv(index=False, float_format=FLOAT_FORMAT)
            sys.stdout.write(table)
        else:
            sys.stdout.write(report.model_dump_json(indent=2) + "\n")
        return EXIT_OK

    if request.format == "csv":
        write_fit_csv(report, request.out)
    else:
        write_json_report(report, request.out)
    print(fit_frame(report).to_string(index=False))
    logger.info("fit_report_written", path=str(request.out), format=request.format)
    return EXIT_OK


def cmd_simulate(
    config: SimulationConfig, out: Path | None = None, records: Path | None = None
) -> int:
    """
    Run a Monte Carlo study, write its files and print the summary table.

    Args:
        config: Simulation parameters
        out: JSON report destination (not written if None)
        records: Per-replication CSV destination (next to out if None)

    Returns:
        Process exit code
    """
    try:
        report: MonteCarloReport = run_monte_carlo(config)
    except RobustLassoError as e:
        logger.error(
            "simulate_command_failed", error=str(e), error_type=type(e).__name__
        )
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)

    if out is not None:
        write_json_report(report, out)
        records = records or out.with_suffix(".records.csv")
    if records is not None:
        write_replications_csv(report.records, records)

    print(format_monte_carlo_table(report), end="")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers: {e}"
        ) from e


def _name_list(text: str) -> tuple[str, ...]:
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    if not names:
        raise argparse.ArgumentTypeError("expected at least one column name")
    return names


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for all subcommands."""
    parser = _Parser(
        prog="pyrobustlasso",
        description="Outlier-robust inference in high-dimensional linear models",
    )
    parser.add_argument(
        "--log-level", default=None, help="Override LOG_LEVEL (DEBUG, INFO, ...)"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="Fit the two-step estimator on a CSV file")
    fit.add_argument("--data", type=Path, required=True, help="Input CSV")
    fit.add_argument("--outcome", required=True, help="Outcome column")
    fit.add_argument(
        "--treatments", type=_name_list, required=True, help="Comma-separated"
    )
    fit.add_argument(
        "--controls",
        default=REST,
        help="Comma-separated control columns, or 'rest' (default)",
    )
    fit.add_argument("--level", type=float, default=0.95)
    fit.add_argument("--penalty-c", type=float, default=DEFAULT_PENALTY_C)
    fit.add_argument(
        "--lambda-beta", type=_float_list, default=None, help="1 or K+1 values"
    )
    fit.add_argument(
        "--lambda-gamma", type=_float_list, default=None, help="1 or K+1 values"
    )
    fit.add_argument("--max-outer-iters", type=int, default=DEFAULT_OUTER_ITERS)
    fit.add_argument("--tol", type=float, default=None, help="Lasso KKT tolerance")
    fit.add_argument("--out", type=Path, default=None)
    fit.add_argument("--format", choices=("json", "csv"), default="json")

    sim = sub.add_parser("simulate", help="Run the Monte Carlo study")
    sim.add_argument("--preset", choices=("table1", "table2"), default=None)
    sim.add_argument("--n", type=int)
    sim.add_argument("--p", type=int)
    sim.add_argument("--eps", type=float)
    sim.add_argument("--z", type=float)
    sim.add_argument("--alpha", type=float, dest="alpha_true")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--penalty-c", type=float, dest="c_const")
    sim.add_argument("--level", type=float)
    sim.add_argument("--max-outer-iters", type=int, dest="outer_iters")
    sim.add_argument("--tol", type=float, dest="lasso_tol")
    sim.add_argument("--threads", type=int, dest="workers")
    sim.add_argument("--batch-size", type=int)
    sim.add_argument(
        "--no-baseline",
        action="store_false",
        dest="include_biased_baseline",
        default=None,
        help="Skip the non-robust baseline",
    )
    sim.add_argument("--out", type=Path, default=Path("monte_carlo.json"))
    sim.add_argument("--records", type=Path, default=None, help="Per-rep CSV")

    sub.add_parser("version", help="Print the version")
    return parser


_SIMULATION_FLAGS = (
    "n",
    "p",
    "eps",
    "z",
    "alpha_true",
    "reps",
    "seed",
    "c_const",
    "level",
    "outer_iters",
    "lasso_tol",
    "workers",
    "batch_size",
    "include_biased_baseline",
)


def simulation_config_from_args(args: argparse.Namespace) -> SimulationConfig:
    """Preset (if any) overridden by every flag given explicitly."""
    overrides = {
        name: getattr(args, name)
        for name in _SIMULATION_FLAGS
        if getattr(args, name) is not None
    }
    if args.preset is not None:
        return SimulationConfig.preset(args.preset, **overrides)
    return SimulationConfig.model_validate(overrides)


def fit_request_from_args(args: argparse.Namespace) -> FitRequest:
    """Translate parsed fit flags into a FitRequest."""
    solver: dict[str, Any] = {"max_outer_iters": args.max_outer_iters, "n_jobs": -1}
    if args.tol is not None:
        solver["lasso_tol"] = args.tol
    controls: tuple[str, ...] | str = (
        REST if args.controls == REST else _name_list(args.controls)
    )
    return FitRequest.model_validate(
        {
            "data": args.data,
            "outcome": args.outcome,
            "treatments": args.treatments,
            "controls": controls,
            "level": args.level,
            "penalty_c": args.penalty_c,
            "lambda_beta": args.lambda_beta,
            "lambda_gamma": args.lambda_gamma,
            "solver": solver,
            "out": args.out,
            "format": args.format,
        }
    )


def run(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments and dispatch to a subcommand.

    Args:
        argv: Arguments without the program name (sys.argv[1:] if None)

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    configure_logging(args.log_level)

    if args.command == "version":
        print(f"pyrobustlasso {__version__}")
        return EXIT_OK

    try:
        if args.command == "fit":
            return cmd_fit(fit_request_from_args(args))
        config = simulation_config_from_args(args)
        return cmd_simulate(config, args.out, args.records)
    except (ValidationError, DataValidationError, argparse.ArgumentTypeError) as e:
        logger.error("invalid_arguments", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
