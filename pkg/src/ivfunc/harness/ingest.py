"""Reading price series from CSV onto a regular observation grid."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ivfunc.errors import ConfigError, DataError
from ivfunc.sde_sim import PathTruth, SamplePath, TimeGrid

SECONDS_PER_DAY_DEFAULT = 6.5 * 3600.0


@dataclass(frozen=True)
class ResampleRule:
    """Regular grid of ``n_steps`` steps of ``step_seconds`` from the first timestamp.

    Trading time is treated as continuous: ``hours_per_day`` converts seconds
    to days, ``days_per_unit`` days to the model's time unit. Grid points more
    than ``max_gap_seconds`` after the latest observation are rejected.
    """

    step_seconds: float
    n_steps: int | None = None
    max_gap_seconds: float | None = None
    hours_per_day: float = 6.5
    days_per_unit: float = 1.0

    def __post_init__(self):
        if not self.step_seconds > 0:
            raise ConfigError(f"step_seconds must be positive, got {self.step_seconds}")
        if self.n_steps is not None and self.n_steps < 1:
            raise ConfigError(f"n_steps must be positive, got {self.n_steps}")


DEFAULT_COLUMNS = {"timestamp": "timestamp", "price": "price"}


def _timestamps(col: pd.Series) -> np.ndarray:
    """Seconds as float; numeric columns are taken as seconds already."""
    if pd.api.types.is_numeric_dtype(col):
        return col.to_numpy(dtype=float)
    try:
        ts = pd.to_datetime(col, utc=True)
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparseable timestamp column: {exc}") from exc
    return (ts - ts.iloc[0]).dt.total_seconds().to_numpy() + 0.0


def ingest_csv(
    file: str | Path,
    column_map: dict | None = None,
    resample_rule: ResampleRule | None = None,
) -> SamplePath:
    """Parse ``(timestamp, price)`` rows, take logs and resample by last observation.

    Row numbers in errors count data rows from 1 (the header is line 1 of the file).
    """
    cols = {**DEFAULT_COLUMNS, **(column_map or {})}
    if resample_rule is None:
        raise ConfigError("ingest_csv needs a resample rule")
    try:
        df = pd.read_csv(file, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {file}: {exc}") from exc
    for role in ("timestamp", "price"):
        if cols[role] not in df.columns:
            raise DataError(f"missing column {cols[role]!r} ({role}) in {file}")
    if df.empty:
        raise DataError(f"{file} has no data rows")

    t = _timestamps(df[cols["timestamp"]])
    price = pd.to_numeric(df[cols["price"]], errors="coerce").to_numpy(dtype=float)

    bad = ~np.isfinite(t)
    if bad.any():
        raise DataError(f"invalid timestamp at row {int(np.flatnonzero(bad)[0]) + 1}")
    step = np.diff(t)
    back = np.flatnonzero(step < 0)
    if back.size:
        raise DataError(f"timestamps not monotone: row {int(back[0]) + 2} precedes row {int(back[0]) + 1}")
    bad = ~(price > 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"non-positive or missing price {df[cols['price']].iloc[i]!r} at row {i + 1}")

    rule = resample_rule
    span = t[-1] - t[0]
    n_steps = rule.n_steps if rule.n_steps is not None else int(np.floor(span / rule.step_seconds + 1e-9))
    if n_steps < 1:
        raise DataError("series is shorter than one grid step")
    grid_t = t[0] + np.arange(n_steps + 1) * rule.step_seconds
    # last observation at or before each grid time (duplicates: the last row wins)
    idx = np.searchsorted(t, grid_t + 1e-9 * rule.step_seconds, side="right") - 1
    if rule.max_gap_seconds is not None:
        gap = grid_t - t[idx]
        over = np.flatnonzero(gap > rule.max_gap_seconds)
        if over.size:
            j = int(over[0])
            raise DataError(
                f"gap of {gap[j]:g} s before grid point {j} exceeds {rule.max_gap_seconds:g} s "
                f"(last observation at row {int(idx[j]) + 1})"
            )
    x = np.log(price[idx])
    seconds_per_unit = rule.hours_per_day * 3600.0 * rule.days_per_unit
    grid = TimeGrid(horizon=n_steps * rule.step_seconds / seconds_per_unit, n_steps=n_steps,
                    label=f"csv,dt={rule.step_seconds:g}s")
    return SamplePath(grid=grid, x=x, truth=None, meta={"source": str(file), "rows": len(df)})


def write_path_csv(path: SamplePath, file: str | Path, with_truth: bool = True) -> Path:
    """Dump a path as ``t,x[,c,volvol]`` with full float precision."""
    data = {"t": path.grid.times, "x": path.x}
    if with_truth and path.truth is not None:
        data["c"] = path.truth.c_path
        data["volvol"] = path.truth.volvol_path
    file = Path(file)
    pd.DataFrame(data).to_csv(file, index=False, float_format="%.17g")
    return file


def read_path_csv(file: str | Path) -> SamplePath:
    """Inverse of :func:`write_path_csv` (regular grid given by the ``t`` column)."""
    try:
        df = pd.read_csv(file, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {file}: {exc}") from exc
    if not {"t", "x"} <= set(df.columns):
        raise DataError(f"{file} needs columns t and x")
    t = df["t"].to_numpy(dtype=float)
    if t.size < 2:
        raise DataError(f"{file} needs at least two observations")
    steps = np.diff(t)
    if np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0]) + 2
        raise DataError(f"time column not increasing at row {row}")
    n = t.size - 1
    horizon = float(t[-1] - t[0])
    if np.max(np.abs(steps - horizon / n)) > 1e-9 * max(horizon, 1.0):
        raise DataError(f"{file} is not on a regular grid")
    truth = None
    if {"c", "volvol"} <= set(df.columns):
        truth = PathTruth(df["c"].to_numpy(dtype=float), df["volvol"].to_numpy(dtype=float))
    return SamplePath(TimeGrid(horizon, n), df["x"].to_numpy(dtype=float), truth)
