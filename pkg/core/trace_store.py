"""
Parquet archive of evaluation traces.

One table per run with a `realization` column, written next to the
per-realization CSVs. Reading tries Parquet first and falls back to the CSV
directory when the archive is missing or unreadable.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

logger = logging.getLogger(__name__)

ARCHIVE_NAME = "traces.parquet"
CSV_PATTERN = "trace_{index:04d}.csv"

# Fallback encodings for CSV traces written by other tools
ENCODING_FALLBACK = ["utf-8", "latin-1"]


def write_trace_archive(traces: Sequence[pd.DataFrame], path) -> Path:
    """Concatenate traces with their realization index and write one Parquet file."""
    path = Path(path)
    frames = [t.assign(realization=i) for i, t in enumerate(traces)]
    if not frames:
        raise ValueError("No traces to archive.")
    df = pd.concat(frames, ignore_index=True)
    df = df[["realization", *[c for c in df.columns if c != "realization"]]]
    table = pa.Table.from_pandas(df, preserve_index=False)
    pq.write_table(table, path)
    logger.debug("Archived %d traces (%d rows) to %s", len(frames), len(df), path)
    return path


def _split(df: pd.DataFrame) -> List[pd.DataFrame]:
    return [
        g.drop(columns="realization").reset_index(drop=True)
        for _, g in df.groupby("realization", sort=True)
    ]


def load_trace_archive(path, csv_dir: Optional[Path] = None) -> List[pd.DataFrame]:
    """
    Traces of a run in realization order.

    Attempts the Parquet archive first and falls back to trace_*.csv files in
    `csv_dir` (default: the archive's directory).
    """
    path = Path(path)
    try:
        table = pq.read_table(path)
        if table.num_rows > 0 and "realization" in table.column_names:
            return _split(table.to_pandas())
        logger.warning("Trace archive %s is empty or has no realization column.", path)
    except (OSError, pa.ArrowInvalid) as e:
        logger.warning("Could not read trace archive %s (%s); falling back to CSV traces.", path, e)

    return _load_csv_traces(Path(csv_dir) if csv_dir is not None else path.parent)


def _load_csv_traces(directory: Path) -> List[pd.DataFrame]:
    files = sorted(directory.glob("trace_*.csv"))
    if not files:
        raise FileNotFoundError(f"No trace archive and no trace_*.csv files in {directory}")

    traces = []
    for f in files:
        for encoding in ENCODING_FALLBACK:
            try:
                df = pd.read_csv(f, encoding=encoding)
                break
            except UnicodeDecodeError:
                continue
        else:
            raise ValueError(f"Failed to decode {f} with any of: {', '.join(ENCODING_FALLBACK)}")
        df.columns = df.columns.str.strip()
        traces.append(df)
    return traces


def load_trace_columns(path, columns: list) -> pd.DataFrame:
    """Load only the requested columns of the archive."""
    table = pq.read_table(Path(path), columns=columns)
    return table.to_pandas()
