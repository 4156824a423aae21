"""Fair-price trajectory sources: arithmetic Brownian simulator, Euler scheme
for one-dimensional diffusions, historical replay windows, and star-discrepancy
diagnostics for replayed sequences.

Randomness is counter-based: every Monte-Carlo replication owns a Philox
stream keyed by ``(seed, stream_id)``, so a path is reproduced bit-for-bit
from its key alone, independent of generation order, chunking or thread
count.  That is what makes common-random-number reuse across posting
distances (and across finite-difference probes) trivial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DataLoadError, SourceExhaustedError

__all__ = [
    "PricePath",
    "RngStream",
    "DiffusionSpec",
    "simulate_brownian",
    "simulate_euler",
    "replay_source",
    "BrownianSource",
    "EulerSource",
    "ReplaySource",
    "DiscrepancyResult",
    "star_discrepancy",
]


@dataclass(frozen=True, eq=False)
class PricePath:
    """A discretely sampled fair-price trajectory on its time grid.

    ``quadrature`` records which endpoint convention the intensity integral
    uses: ``"left"`` for simulated stepwise-constant paths, ``"right"`` for
    replayed tick cycles (gap weights attached to the arriving tick).  Times
    must be non-decreasing with positive total span; simulated grids are
    always strictly increasing, replayed cycles may carry zero-gap ticks
    (simultaneous trades), which simply receive zero weight.
    """

    times: np.ndarray
    values: np.ndarray
    quadrature: str = "left"
    exited_state_interval: bool = False

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or values.ndim != 1 or times.size != values.size:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if times.size < 2:
            raise ValueError("a price path needs at least two samples")
        if times[0] != 0.0:
            raise ValueError(f"path times must start at 0, got {times[0]}")
        gaps = np.diff(times)
        if np.any(gaps < 0.0) or not times[-1] > 0.0:
            raise ValueError("path times must be non-decreasing with positive span")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        if np.any(values <= 0.0):
            raise ValueError("path values must be positive prices")
        if self.quadrature not in ("left", "right"):
            raise ValueError(f"quadrature must be 'left' or 'right', got {self.quadrature!r}")

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    @property
    def initial(self) -> float:
        return float(self.values[0])

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


@dataclass(frozen=True)
class RngStream:
    """Keyed Philox stream: one per Monte-Carlo replication."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2**64):
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if not (0 <= self.stream_id < 2**64):
            raise ValueError(f"stream_id must fit in 64 bits, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=(self.seed << 64) | self.stream_id))

    def substream(self, stream_id: int) -> "RngStream":
        return replace(self, stream_id=stream_id)


def normal_block(seed: int, first_stream: int, n_paths: int, n_steps: int) -> np.ndarray:
    """Standard normals, one keyed stream per row; row i is bit-identical to
    what ``RngStream(seed, first_stream + i)`` would draw on its own."""
    out = np.empty((n_paths, n_steps), dtype=float)
    for i in range(n_paths):
        gen = RngStream(seed, first_stream + i).generator()
        gen.standard_normal(n_steps, out=out[i])
    return out


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients of ``dX = drift(t, X) dt + vol(t, X) dW`` on an interval.

    ``drift`` and ``vol`` must accept numpy arrays in their state argument.
    Derivative callbacks are optional and only needed by the admissibility
    diagnostics; missing ones fall back to finite differences there.
    """

    drift: Callable
    vol: Callable
    state_interval: tuple[float, float] = (-math.inf, math.inf)
    drift_dx: Callable | None = None
    vol_dt: Callable | None = None
    vol_dx: Callable | None = None
    vol_dxx: Callable | None = None

    def __post_init__(self) -> None:
        lo, hi = self.state_interval
        if not lo < hi:
            raise ValueError(f"state interval must be non-degenerate, got {self.state_interval}")


def _uniform_times(horizon: float, steps: int) -> np.ndarray:
    return np.linspace(0.0, horizon, steps + 1)


def simulate_brownian(
    s0: float, sigma: float, horizon: float, steps: int, rng: RngStream
) -> PricePath:
    """Arithmetic Brownian path on a uniform grid; sigma = 0 gives the constant path."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if not (horizon > 0.0):
        raise ValueError(f"horizon must be > 0, got {horizon}")
    shocks = rng.generator().standard_normal(steps)
    scale = sigma * math.sqrt(horizon / steps)
    values = np.empty(steps + 1)
    values[0] = s0
    for k in range(steps):  # sequential add matches the Euler reduction bit-for-bit
        values[k + 1] = values[k] + scale * shocks[k]
    return PricePath(times=_uniform_times(horizon, steps), values=values)


def simulate_euler(
    spec: DiffusionSpec, x0: float, horizon: float, steps: int, rng: RngStream
) -> PricePath:
    """Stepwise-constant Euler scheme for ``spec`` started at ``x0``.

    A path that leaves the state interval is returned with
    ``exited_state_interval`` set; rejection is the caller's policy.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    lo, hi = spec.state_interval
    if not (lo <= x0 <= hi):
        raise ValueError(f"x0 = {x0} outside state interval {spec.state_interval}")
    shocks = rng.generator().standard_normal(steps)
    dt = horizon / steps
    sqrt_dt = math.sqrt(dt)
    values = np.empty(steps + 1)
    values[0] = x0
    exited = False
    x = x0
    for k in range(steps):
        t = k * dt
        x = x + spec.drift(t, x) * dt + spec.vol(t, x) * sqrt_dt * shocks[k]
        values[k + 1] = x
        exited = exited or not (lo <= x <= hi)
    return PricePath(
        times=_uniform_times(horizon, steps), values=values, exited_state_interval=exited
    )


def replay_source(series, cycle_length: int, shift: int | None = None) -> list[PricePath]:
    """Cut a tick series into replay windows of ``cycle_length`` ticks.

    The n-th window starts at offset ``n * shift`` (disjoint consecutive
    cycles by default); timestamps are rebased to start at zero and the
    window uses right-endpoint gap weights.  The sequence ends when a full
    window no longer fits.
    """
    if cycle_length < 2:
        raise ValueError(f"cycle_length must be >= 2, got {cycle_length}")
    if shift is None:
        shift = cycle_length
    if shift < 1:
        raise ValueError(f"shift must be >= 1, got {shift}")
    timestamps = np.asarray(series.timestamps, dtype=float)
    bids = np.asarray(series.bids, dtype=float)
    if timestamps.size < cycle_length:
        raise DataLoadError(
            f"series of {timestamps.size} ticks is shorter than one cycle of {cycle_length}"
        )
    paths = []
    for start in range(0, timestamps.size - cycle_length + 1, shift):
        window = slice(start, start + cycle_length)
        t = timestamps[window] - timestamps[start]
        if not t[-1] > 0.0:
            raise DataLoadError(
                f"cycle starting at tick {start} has zero elapsed time; cannot form a path"
            )
        paths.append(PricePath(times=t, values=bids[window].copy(), quadrature="right"))
    return paths


class BrownianSource:
    """Replication-keyed arithmetic Brownian paths on a shared uniform grid."""

    def __init__(
        self,
        s0: float,
        sigma: float,
        horizon: float,
        steps: int,
        seed: int,
        first_stream: int = 0,
    ) -> None:
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        if sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        self.s0 = float(s0)
        self.sigma = float(sigma)
        self.horizon = float(horizon)
        self.steps = int(steps)
        self.seed = int(seed)
        self.first_stream = int(first_stream)
        self.times = _uniform_times(self.horizon, self.steps)
        self.quadrature = "left"

    def path(self, index: int) -> PricePath:
        return simulate_brownian(
            self.s0,
            self.sigma,
            self.horizon,
            self.steps,
            RngStream(self.seed, self.first_stream + index),
        )

    def values_block(self, n_paths: int, offset: int = 0) -> np.ndarray:
        shocks = normal_block(self.seed, self.first_stream + offset, n_paths, self.steps)
        scale = self.sigma * math.sqrt(self.horizon / self.steps)
        values = np.empty((n_paths, self.steps + 1))
        values[:, 0] = self.s0
        for k in range(self.steps):
            values[:, k + 1] = values[:, k] + scale * shocks[:, k]
        return values

    def iter_paths(self, n_paths: int) -> Iterator[PricePath]:
        yield from _iter_block_paths(self, n_paths)


class EulerSource:
    """Replication-keyed Euler-scheme paths of a diffusion on a uniform grid."""

    def __init__(
        self,
        spec: DiffusionSpec,
        x0: float,
        horizon: float,
        steps: int,
        seed: int,
        first_stream: int = 0,
    ) -> None:
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        self.spec = spec
        self.x0 = float(x0)
        self.horizon = float(horizon)
        self.steps = int(steps)
        self.seed = int(seed)
        self.first_stream = int(first_stream)
        self.times = _uniform_times(self.horizon, self.steps)
        self.quadrature = "left"

    def path(self, index: int) -> PricePath:
        return simulate_euler(
            self.spec,
            self.x0,
            self.horizon,
            self.steps,
            RngStream(self.seed, self.first_stream + index),
        )

    def values_block(self, n_paths: int, offset: int = 0) -> np.ndarray:
        shocks = normal_block(self.seed, self.first_stream + offset, n_paths, self.steps)
        dt = self.horizon / self.steps
        sqrt_dt = math.sqrt(dt)
        values = np.empty((n_paths, self.steps + 1))
        values[:, 0] = self.x0
        x = values[:, 0]
        for k in range(self.steps):
            t = k * dt
            x = x + self.spec.drift(t, x) * dt + self.spec.vol(t, x) * sqrt_dt * shocks[:, k]
            values[:, k + 1] = x
        return values

    def iter_paths(self, n_paths: int) -> Iterator[PricePath]:
        yield from _iter_block_paths(self, n_paths)


def _iter_block_paths(source, n_paths: int, chunk: int = 8192) -> Iterator[PricePath]:
    """Yield the source's paths out of vectorized blocks; rows are bit-identical
    to per-stream simulation because the recursions share the same float ops."""
    interval = source.spec.state_interval if isinstance(source, EulerSource) else None
    done = 0
    while done < n_paths:
        take = min(chunk, n_paths - done)
        block = source.values_block(take, offset=done)
        for row in block:
            exited = False
            if interval is not None:
                exited = bool(np.any((row < interval[0]) | (row > interval[1])))
            yield PricePath(
                times=source.times, values=row, exited_state_interval=exited
            )
        done += take


class ReplaySource:
    """Path source over precomputed replay cycles, consumed in order."""

    def __init__(self, cycles: Sequence[PricePath]) -> None:
        if not cycles:
            raise DataLoadError("replay source needs at least one cycle")
        self.cycles = list(cycles)

    def __len__(self) -> int:
        return len(self.cycles)

    def path(self, index: int) -> PricePath:
        if index >= len(self.cycles):
            raise SourceExhaustedError(
                f"replay source holds {len(self.cycles)} cycles, path {index} requested"
            )
        return self.cycles[index]

    def iter_paths(self, n_paths: int) -> Iterator[PricePath]:
        if n_paths > len(self.cycles):
            raise SourceExhaustedError(
                f"replay source holds {len(self.cycles)} cycles, {n_paths} paths requested"
            )
        yield from self.cycles[:n_paths]


@dataclass(frozen=True)
class DiscrepancyResult:
    """Star discrepancy value; exact only in dimension <= 2, else a lower bound."""

    value: float
    is_exact: bool
    dimension: int


def _anchored_fractions(sample: np.ndarray, corners: np.ndarray, inclusive: np.ndarray) -> np.ndarray:
    """Fraction of sample points inside [0, corner] for each corner, with a
    per-axis inclusive/strict flag."""
    counts = np.ones((corners.shape[0], sample.shape[0]), dtype=bool)
    for axis in range(sample.shape[1]):
        col = sample[:, axis][None, :]
        edge = corners[:, axis][:, None]
        if inclusive[axis]:
            counts &= col <= edge
        else:
            counts &= col < edge
    return counts.mean(axis=1)


def star_discrepancy(
    points,
    reference=None,
    *,
    upper: float | None = None,
    corner_samples: int = 100_000,
    seed: int = 0,
) -> DiscrepancyResult:
    """Star discrepancy of ``points`` against a reference law on [0, upper]^d.

    ``reference=None`` compares against the product-uniform law (``upper``
    required); otherwise ``reference`` is a sample drawn from the limit law
    and the comparison is empirical-vs-empirical.  Dimensions 1 and 2 scan
    the full critical grid of observed coordinates (exact sup); higher
    dimensions probe ``corner_samples`` random corners of the same grid and
    report a lower bound.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2:
        raise ValueError("points must form an (n, d) array")
    n, d = pts.shape
    if n < 1:
        raise ValueError("need at least one point")
    ref = None if reference is None else np.atleast_2d(np.asarray(reference, dtype=float))
    if ref is None and upper is None:
        raise ValueError("uniform reference needs the box bound 'upper'")
    if upper is None:
        upper = float(max(pts.max(), ref.max()))
    if upper <= 0.0:
        raise ValueError(f"box bound must be > 0, got {upper}")
    if pts.min() < 0.0 or pts.max() > upper:
        raise ValueError("points must lie inside [0, upper]^d")
    if ref is not None:
        if ref.shape[1] != d:
            raise ValueError("reference sample dimension mismatch")
        if ref.min() < 0.0 or ref.max() > upper:
            raise ValueError("reference must lie inside [0, upper]^d")

    def measure(corners: np.ndarray, inclusive: np.ndarray) -> np.ndarray:
        if ref is None:
            return np.prod(np.clip(corners / upper, 0.0, 1.0), axis=1)
        return _anchored_fractions(ref, corners, inclusive)

    coord_grid = []
    for axis in range(d):
        coords = pts[:, axis] if ref is None else np.concatenate([pts[:, axis], ref[:, axis]])
        coord_grid.append(np.unique(np.concatenate([coords, [upper]])))

    best = 0.0
    if d <= 2:
        mesh = np.meshgrid(*coord_grid, indexing="ij")
        corners = np.stack([m.ravel() for m in mesh], axis=1)
        for mask in range(2**d):
            inclusive = np.array([(mask >> axis) & 1 == 1 for axis in range(d)])
            gap = np.abs(
                _anchored_fractions(pts, corners, inclusive) - measure(corners, inclusive)
            )
            best = max(best, float(gap.max()))
        return DiscrepancyResult(value=best, is_exact=True, dimension=d)

    gen = np.random.Generator(np.random.Philox(key=seed))
    batch = 4096
    remaining = corner_samples
    while remaining > 0:
        take = min(batch, remaining)
        remaining -= take
        corners = np.stack(
            [axis_coords[gen.integers(0, axis_coords.size, take)] for axis_coords in coord_grid],
            axis=1,
        )
        for mask in (0, (1 << d) - 1):
            inclusive = np.array([(mask >> axis) & 1 == 1 for axis in range(d)])
            gap = np.abs(
                _anchored_fractions(pts, corners, inclusive) - measure(corners, inclusive)
            )
            best = max(best, float(gap.max()))
    return DiscrepancyResult(value=best, is_exact=False, dimension=d)
