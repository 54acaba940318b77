"""CSV ingestion and emission of datasets and replication records.

Dialect: comma-separated, header row, '.' decimal point, UTF-8. Floats are
written with 17 significant digits and read back with pandas' round-trip
parser, so a dataset survives a write/read cycle bit for bit.
"""

from collections import Counter
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from pyrobustlasso.exceptions import DataValidationError
from pyrobustlasso.models.dataset import Dataset, validate_dataset
from pyrobustlasso.models.reports import ReplicationRecord
from pyrobustlasso.monitoring.logger import get_logger

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"
REST = "rest"


def _load_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path,
            sep=",",
            decimal=".",
            encoding="utf-8",
            float_precision="round_trip",
        )
    except FileNotFoundError as e:
        raise DataValidationError(f"Input file not found: {path}") from e
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataValidationError(f"Cannot parse CSV {path}: {e}") from e


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    column = frame[name]
    if pd.api.types.is_bool_dtype(column) or not pd.api.types.is_numeric_dtype(
        column
    ):
        coerced = pd.to_numeric(column, errors="coerce")
        bad = (coerced.isna() & column.notna()).to_numpy()
        if pd.api.types.is_bool_dtype(column) or not bad.any():
            # no single offending cell, the dtype itself is wrong
            raise DataValidationError(
                f"Column '{name}' is not numeric (dtype {column.dtype})",
                column=name,
            )
        row = int(np.flatnonzero(bad)[0])
        raise DataValidationError(
            f"Column '{name}' is not numeric (row {row}: {column.iloc[row]!r})",
            row=row,
            column=name,
        )
    return column.to_numpy(dtype=np.float64)


def resolve_columns(
    header: Sequence[str],
    outcome: str,
    treatments: Sequence[str],
    controls: Sequence[str] | str | None = None,
) -> tuple[str, list[str], list[str]]:
    """
    Check column roles against a CSV header.

    Args:
        header: Column names present in the file
        outcome: Outcome column
        treatments: Treatment columns, in order
        controls: Control columns, or "rest"/None for every other column

    Returns:
        (outcome, treatments, controls)

    Raises:
        DataValidationError: If a column is missing, no treatment is given
            or the role sets overlap
    """
    if not treatments:
        raise DataValidationError("At least one treatment column is required")

    if controls is None or controls == REST:
        taken = {outcome, *treatments}
        control_list = [c for c in header if c not in taken]
    else:
        control_list = [controls] if isinstance(controls, str) else list(controls)

    present = set(header)
    for name in [outcome, *treatments, *control_list]:
        if name not in present:
            raise DataValidationError(
                f"Column '{name}' not found in input", column=name
            )

    counts = Counter([outcome, *treatments, *control_list])
    duplicate = next((name for name, count in counts.items() if count > 1), None)
    if duplicate is not None:
        raise DataValidationError(
            f"Column '{duplicate}' is used in more than one role", column=duplicate
        )
    return outcome, list(treatments), control_list


def read_dataset_csv(
    path: str | Path,
    outcome: str,
    treatments: Sequence[str],
    controls: Sequence[str] | str | None = None,
) -> Dataset:
    """
    Read a dataset from CSV.

    Args:
        path: CSV file with a header row
        outcome: Outcome column
        treatments: Treatment columns, in order (defines k = 1..K)
        controls: Control columns, or "rest"/None for every other column

    Returns:
        Validated Dataset

    Raises:
        DataValidationError: On missing, overlapping or non-numeric columns
            and non-finite entries; the message names the row and column
    """
    frame = _load_frame(Path(path))
    outcome, t_names, c_names = resolve_columns(
        [str(c) for c in frame.columns], outcome, treatments, controls
    )

    y = _numeric_column(frame, outcome)
    D = np.column_stack([_numeric_column(frame, t) for t in t_names])
    X = (
        np.column_stack([_numeric_column(frame, c) for c in c_names])
        if c_names
        else None
    )

    data = validate_dataset(
        y,
        D,
        X,
        treatment_names=t_names,
        control_names=c_names,
        outcome_name=outcome,
    )
    logger.debug("dataset_loaded", path=str(path), n=data.n, K=data.K, p=data.p)
    return data


def dataset_frame(data: Dataset) -> pd.DataFrame:
    """Outcome, treatments and controls as one DataFrame, in that order."""
    columns: dict[str, np.ndarray] = {data.outcome_name: np.asarray(data.y)}
    for k, name in enumerate(data.treatment_names):
        columns[name] = np.asarray(data.D[:, k])
    for j, name in enumerate(data.control_names):
        columns[name] = np.asarray(data.X[:, j])
    return pd.DataFrame(columns)


def write_dataset_csv(data: Dataset, path: str | Path) -> Path:
    """
    Write a dataset with 17 significant digits per value.

    Args:
        data: Dataset to write
        path: Destination file

    Returns:
        The destination path
    """
    destination = Path(path)
    dataset_frame(data).to_csv(
        destination, index=False, float_format=FLOAT_FORMAT, encoding="utf-8"
    )
    return destination


def write_replications_csv(
    records: Sequence[ReplicationRecord], path: str | Path
) -> Path:
    """
    Write one row per replication, sorted by rep_index.

    Args:
        records: Replication records
        path: Destination file

    Returns:
        The destination path
    """
    destination = Path(path)
    ordered = sorted(records, key=lambda r: r.rep_index)
    columns = list(ReplicationRecord.model_fields)
    frame = pd.DataFrame([r.model_dump() for r in ordered], columns=columns)
    frame.to_csv(destination, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    return destination
