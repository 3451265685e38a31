"""Data ingestion and result persistence.

Input series are daily hospitalization counts in CSV with ISO-8601
dates; gaps and non-daily spacing are rejected rather than resampled,
since the model's time step is one day.  Outputs are plot-ready CSV
tables and JSON summaries plus a manifest.json carrying the exact
config text, the seed, and a SHA-256 per written file.  Floats are
serialized at 17 significant digits so files are byte-stable and
round-trip exactly.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .experiments import RmseGrid, SyntheticDataset
from .filtering import BAND_COORDS, FilterResult
from .pmcmc import Chain, chain_summary

__all__ = [
    "DataError",
    "HospitalizationSeries",
    "load_series",
    "write_series",
    "write_outputs",
    "write_dataset",
    "write_grid",
]


class DataError(ValueError):
    """An input data file is malformed or the selection is unusable."""


@dataclass(frozen=True)
class HospitalizationSeries:
    """Daily admission counts over a contiguous date range."""

    dates: Tuple[datetime.date, ...]
    counts: np.ndarray
    region: str = ""

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.counts):
            raise DataError("dates and counts must have equal length")
        if len(self.dates) == 0:
            raise DataError("series must be non-empty")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur != prev + datetime.timedelta(days=1):
                raise DataError(
                    f"date gap: expected {prev + datetime.timedelta(days=1)}, "
                    f"found {cur}"
                )
        if np.any(np.asarray(self.counts) < 0):
            raise DataError("counts must be >= 0")

    def __len__(self) -> int:
        return len(self.dates)


def load_series(
    path: Union[str, Path],
    date_column: str = "date",
    count_column: str = "count",
    date_range: Optional[Tuple[Optional[datetime.date], Optional[datetime.date]]] = None,
) -> HospitalizationSeries:
    """Parse, range-filter, and validate a daily count series.

    A 'region' column, when present, must carry one constant label and
    becomes the series region.  Distinct errors: missing column,
    non-integer or negative count, date gap (naming the expected date),
    and an empty selection.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    start, end = date_range if date_range is not None else (None, None)
    dates = []
    counts = []
    regions = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (date_column, count_column):
            if col not in header:
                raise DataError(
                    f"column '{col}' not found in {path} (columns: {', '.join(header)})"
                )
        for row in reader:
            try:
                day = datetime.date.fromisoformat(row[date_column].strip())
            except ValueError as e:
                raise DataError(
                    f"bad date {row[date_column]!r} in {path}: {e}"
                ) from e
            if start is not None and day < start:
                continue
            if end is not None and day > end:
                continue
            raw = row[count_column].strip()
            try:
                value = int(raw)
            except ValueError:
                raise DataError(
                    f"non-integer count {raw!r} on {day} in {path}"
                ) from None
            if value < 0:
                raise DataError(f"negative count {value} on {day} in {path}")
            if "region" in header:
                regions.add(row["region"].strip())
            dates.append(day)
            counts.append(value)
    if not dates:
        raise DataError(f"selected date range contains no rows in {path}")
    for prev, cur in zip(dates, dates[1:]):
        expected = prev + datetime.timedelta(days=1)
        if cur != expected:
            raise DataError(f"date gap in {path}: expected {expected}, found {cur}")
    if len(regions) > 1:
        raise DataError(
            f"multiple region labels in {path}: {', '.join(sorted(regions))}"
        )
    return HospitalizationSeries(
        dates=tuple(dates),
        counts=np.asarray(counts, dtype=np.int64),
        region=regions.pop() if regions else "",
    )


def write_series(series: HospitalizationSeries, path: Union[str, Path]) -> None:
    """Inverse of load_series: CSV with date, count, and optional region."""
    with_region = bool(series.region)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "count"] + (["region"] if with_region else []))
        for day, count in zip(series.dates, series.counts):
            row = [day.isoformat(), str(int(count))]
            if with_region:
                row.append(series.region)
            writer.writerow(row)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finish_manifest(
    out: Path, files: Dict[str, Path], config_text: str, seed: int
) -> dict:
    manifest = {
        "config": config_text,
        "seed": int(seed),
        "files": {name: _sha256(p) for name, p in sorted(files.items())},
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def write_outputs(
    out_dir: Union[str, Path],
    chain: Optional[Chain] = None,
    filter_result: Optional[FilterResult] = None,
    config_text: str = "",
    seed: int = 0,
    burn_in_discard: int = 0,
) -> dict:
    """Persist chain and/or filter artifacts plus manifest.json.

    chain.csv: iteration, one column per parameter, log_post, accepted.
    summary.json: chain summary (past burn_in_discard) and/or the filter
    log-likelihood.  bands.csv: t, coord, q05, q50, q95 rows for every
    state coordinate.  Returns the manifest dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: Dict[str, Path] = {}
    summary: dict = {}
    if chain is not None:
        if chain.draws.shape[0] < 1:
            raise ValueError("chain holds no draws")
        path = out / "chain.csv"
        header = ["iteration", *chain.names, "log_post", "accepted"]
        rows = (
            [str(m + 1)]
            + [_fmt(v) for v in chain.draws[m]]
            + [_fmt(chain.log_posts[m]), str(int(chain.accepted[m]))]
            for m in range(chain.draws.shape[0])
        )
        _write_rows(path, header, rows)
        files["chain.csv"] = path
        summary["chain"] = chain_summary(chain, burn_in_discard)
    if filter_result is not None:
        summary["filter"] = {
            "log_likelihood": float(filter_result.log_likelihood),
            "degenerate_at": filter_result.degenerate_at,
        }
        if filter_result.quantile_bands is not None:
            path = out / "bands.csv"
            bands = filter_result.quantile_bands
            rows = (
                [_fmt(filter_result.times[t]), coord]
                + [_fmt(bands[t, ci, q]) for q in range(3)]
                for t in range(bands.shape[0])
                for ci, coord in enumerate(BAND_COORDS)
            )
            _write_rows(path, ["t", "coord", "q05", "q50", "q95"], rows)
            files["bands.csv"] = path
    if summary:
        path = out / "summary.json"
        _write_json(path, summary)
        files["summary.json"] = path
    return _finish_manifest(out, files, config_text, seed)


def write_dataset(
    out_dir: Union[str, Path],
    dataset: SyntheticDataset,
    config_text: str = "",
    seed: int = 0,
) -> dict:
    """Persist a synthetic dataset as dataset.csv plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dataset.csv"
    traj = dataset.trajectory
    beta = traj.beta
    rows = (
        [
            _fmt(traj.times[t]),
            _fmt(traj.s[t]),
            _fmt(traj.i[t]),
            _fmt(traj.h[t]),
            _fmt(traj.r[t]),
            _fmt(beta[t]),
            str(int(dataset.observations[t])),
        ]
        for t in range(len(traj))
    )
    _write_rows(path, ["t", "s", "i", "h", "r", "beta", "y"], rows)
    return _finish_manifest(out, {"dataset.csv": path}, config_text, seed)


def write_grid(
    out_dir: Union[str, Path],
    grid: RmseGrid,
    ranks: Optional[Dict[int, float]] = None,
    config_text: str = "",
    seed: int = 0,
) -> dict:
    """Persist an RMSE grid (and optional mean ranks) plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: Dict[str, Path] = {}
    path = out / "rmse_grid.csv"
    rows = (
        [
            str(row.true_days),
            str(row.filter_days),
            str(row.replicate),
            _fmt(row.rmse),
            _fmt(row.rmse_masked),
        ]
        for row in grid.rows
    )
    _write_rows(
        path, ["true_days", "filter_days", "replicate", "rmse", "rmse_masked"], rows
    )
    files["rmse_grid.csv"] = path
    if ranks is not None:
        path = out / "mean_ranks.csv"
        rank_rows = (
            [str(fd), _fmt(rank)] for fd, rank in sorted(ranks.items())
        )
        _write_rows(path, ["filter_days", "mean_rank"], rank_rows)
        files["mean_ranks.csv"] = path
    return _finish_manifest(out, files, config_text, seed)
