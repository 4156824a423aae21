"""Tick-data ingestion and the cycle construction used to replay a trading
day through the learner: consecutive windows of a fixed number of trades,
each window weighted by its inter-trade gaps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataLoadError
from .market import IntensityModel, path_intensity
from .paths import PricePath, RngStream, replay_source

__all__ = [
    "TickSeries",
    "load_ticks",
    "write_ticks",
    "synthetic_tick_series",
    "make_cycles",
    "cycle_intensity",
    "mean_cycle_intensity",
    "export_cycles_csv",
]


@dataclass(frozen=True, eq=False)
class TickSeries:
    """Raw (timestamp, bid) observations with non-decreasing timestamps."""

    timestamps: np.ndarray
    bids: np.ndarray

    def __post_init__(self) -> None:
        timestamps = np.asarray(self.timestamps, dtype=float)
        bids = np.asarray(self.bids, dtype=float)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "bids", bids)
        if timestamps.ndim != 1 or bids.ndim != 1 or timestamps.size != bids.size:
            raise DataLoadError("timestamps and bids must be 1-d arrays of equal length")
        if timestamps.size == 0:
            raise DataLoadError("empty tick series")
        if np.any(np.diff(timestamps) < 0.0):
            raise DataLoadError("tick timestamps must be non-decreasing")
        if not np.all(np.isfinite(bids)) or np.any(bids <= 0.0):
            raise DataLoadError("bids must be finite and positive")

    def __len__(self) -> int:
        return int(self.timestamps.size)


def load_ticks(path: str | Path) -> TickSeries:
    """Parse a CSV with header ``timestamp,bid``; rejects malformed rows with
    their line number and refuses NaN or non-positive bids."""
    path = Path(path)
    timestamps: list[float] = []
    bids: list[float] = []
    try:
        with path.open(newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["timestamp", "bid"]:
                raise DataLoadError(f"{path}: expected header 'timestamp,bid', got {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    ts, bid = float(row[0]), float(row[1])
                except (ValueError, IndexError) as exc:
                    raise DataLoadError(f"{path}:{lineno}: malformed row {row!r}") from exc
                if math.isnan(ts) or math.isnan(bid):
                    raise DataLoadError(f"{path}:{lineno}: NaN value in row {row!r}")
                if bid <= 0.0:
                    raise DataLoadError(f"{path}:{lineno}: non-positive bid {bid}")
                timestamps.append(ts)
                bids.append(bid)
    except OSError as exc:
        raise DataLoadError(f"cannot read tick file {path}: {exc}") from exc
    if len(timestamps) < 1:
        raise DataLoadError(f"{path}: no data rows")
    if np.any(np.diff(np.asarray(timestamps)) < 0.0):
        raise DataLoadError(f"{path}: timestamps are not sorted")
    return TickSeries(np.asarray(timestamps), np.asarray(bids))


def write_ticks(series: TickSeries, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp", "bid"])
        for ts, bid in zip(series.timestamps, series.bids):
            writer.writerow([f"{ts:.17g}", f"{bid:.17g}"])


def synthetic_tick_series(
    n_ticks: int, s0: float, sigma_per_tick: float, seed: int, dt: float = 1.0
) -> TickSeries:
    """Brownian-model bid series on a regular trade clock, for replay tests
    and demos.  One Gaussian increment of std ``sigma_per_tick`` per tick."""
    if n_ticks < 2:
        raise ValueError(f"need at least two ticks, got {n_ticks}")
    gen = RngStream(seed, 0).generator()
    increments = sigma_per_tick * gen.standard_normal(n_ticks - 1)
    bids = s0 + np.concatenate([[0.0], np.cumsum(increments)])
    if np.any(bids <= 0.0):
        raise ValueError("synthetic series crossed zero; lower sigma_per_tick")
    return TickSeries(dt * np.arange(n_ticks, dtype=float), bids)


def make_cycles(series: TickSeries, cycle_length: int, shift: int | None = None) -> list[PricePath]:
    """Windows of ``cycle_length`` ticks, rebased to start at time zero.

    With the default ``shift = cycle_length`` the cycles are disjoint and
    consecutive; a tail shorter than one cycle is dropped.
    """
    return replay_source(series, cycle_length, shift)


def cycle_intensity(model: IntensityModel, cycle: PricePath, delta: float) -> float:
    """Integrated intensity of one replay cycle at posting distance delta.

    Right-endpoint gap weights referenced to the cycle's first tick: each
    arriving trade contributes its distance-discounted waiting time.
    """
    if cycle.quadrature != "right":
        raise ValueError("cycle_intensity expects a replay cycle (right-endpoint weights)")
    if cycle.times.size < 2:
        raise ValueError("a cycle needs at least two ticks")
    return path_intensity(model, delta, cycle).value


def mean_cycle_intensity(
    model: IntensityModel, cycles: Sequence[PricePath], delta: float
) -> float:
    """Empirical mean of the per-cycle integrated intensity at distance delta."""
    if not cycles:
        raise ValueError("need at least one cycle")
    return float(np.mean([cycle_intensity(model, cycle, delta) for cycle in cycles]))


def export_cycles_csv(cycles: Sequence[PricePath], path: str | Path) -> None:
    """Audit export with schema ``cycle_id,t,bid``."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cycle_id", "t", "bid"])
        for cycle_id, cycle in enumerate(cycles):
            for t, bid in zip(cycle.times, cycle.values):
                writer.writerow([cycle_id, f"{t:.17g}", f"{bid:.17g}"])
