"""Execution-flow model: exponential fill intensity, its path integral with
exact distance derivatives, the market-impact penalty, and intensity
calibration from observed fill rates.

The fill intensity at signed distance ``x`` from the fair price is
``A * exp(-k * x)``.  For this family the integrated intensity over a posting
window factorizes in the posting distance, so its first two distance
derivatives are exactly ``-k`` and ``k**2`` times the integral itself; the
rest of the library leans on that exactness.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import poisson
from .errors import CalibrationError, DataLoadError

__all__ = [
    "IntensityModel",
    "PenaltySpec",
    "ExecutionSetup",
    "IntensityIntegral",
    "path_intensity",
    "base_path_intensity",
    "RhoCondition",
    "rho_condition",
    "fit_intensity",
    "read_calibration_csv",
]


@dataclass(frozen=True)
class IntensityModel:
    """Exponential execution intensity: ``base_rate * exp(-decay * x)``.

    ``base_rate`` is the fill rate per unit time when posting exactly at the
    fair price; ``decay`` is the exponential falloff per unit of distance.
    The formula is extended to all of R (it stays finite, positive,
    non-increasing and convex), which also covers the negative distances the
    admissibility criteria evaluate.
    """

    base_rate: float
    decay: float

    def __post_init__(self) -> None:
        if not (self.base_rate > 0.0 and math.isfinite(self.base_rate)):
            raise ValueError(f"base_rate must be finite and > 0, got {self.base_rate}")
        if not (self.decay > 0.0 and math.isfinite(self.decay)):
            raise ValueError(f"decay must be finite and > 0, got {self.decay}")

    def intensity(self, x) -> np.ndarray | float:
        out = self.base_rate * np.exp(-self.decay * np.asarray(x, dtype=float))
        return float(out) if np.ndim(x) == 0 else out

    def log_intensity(self, x) -> np.ndarray | float:
        """log of :meth:`intensity`; safe where the plain value overflows."""
        out = math.log(self.base_rate) - self.decay * np.asarray(x, dtype=float)
        return float(out) if np.ndim(x) == 0 else out


_PENALTY_KINDS = ("identity", "exponential_impact")


@dataclass(frozen=True)
class PenaltySpec:
    """Market-impact penalty applied to the quantity bought aggressively.

    ``identity`` charges the plain quantity.  ``exponential_impact`` charges
    ``(1 + impact_scale * exp(impact_growth * x)) * x``: a convex,
    non-decreasing surcharge that blows up for large residuals.  Both vanish
    at zero.  Monotony and convexity are spot-checked on an integer grid at
    construction.
    """

    kind: str = "identity"
    impact_scale: float = 0.0
    impact_growth: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _PENALTY_KINDS:
            raise ValueError(f"penalty kind must be one of {_PENALTY_KINDS}, got {self.kind!r}")
        if self.impact_scale < 0.0 or not math.isfinite(self.impact_scale):
            raise ValueError(f"impact_scale must be finite and >= 0, got {self.impact_scale}")
        if self.impact_growth < 0.0 or not math.isfinite(self.impact_growth):
            raise ValueError(f"impact_growth must be finite and >= 0, got {self.impact_growth}")
        grid = np.arange(0.0, 51.0)
        values = self(grid)
        if np.any(np.diff(values) < -1e-12):
            raise ValueError("penalty must be non-decreasing on x >= 0")
        if np.any(np.diff(values, 2) < -1e-9):
            raise ValueError("penalty must be convex on x >= 0")

    @classmethod
    def identity(cls) -> "PenaltySpec":
        return cls(kind="identity")

    @classmethod
    def exponential_impact(cls, impact_scale: float, impact_growth: float) -> "PenaltySpec":
        return cls(kind="exponential_impact", impact_scale=impact_scale, impact_growth=impact_growth)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def __call__(self, x) -> np.ndarray | float:
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0):
            raise ValueError("penalty is defined on x >= 0 only")
        if self.is_identity:
            out = arr.copy()
        else:
            out = (1.0 + self.impact_scale * np.exp(self.impact_growth * arr)) * arr
        return float(out) if np.ndim(x) == 0 else out

    def left_derivative(self, q: int) -> float:
        """Analytic left derivative at integer q >= 1."""
        if q < 1:
            raise ValueError(f"left derivative is used at q >= 1, got {q}")
        if self.is_identity:
            return 1.0
        return 1.0 + self.impact_scale * math.exp(self.impact_growth * q) * (
            1.0 + self.impact_growth * q
        )

    def increment(self, x: int) -> float:
        """penalty(x) - penalty(x - 1) for integer x >= 1."""
        if x < 1:
            raise ValueError(f"increment is defined for x >= 1, got {x}")
        return float(self(float(x))) - float(self(float(x - 1)))


@dataclass(frozen=True)
class ExecutionSetup:
    """One posting problem: quantity, window, impact premium, book depth, start price."""

    quantity: int
    horizon: float
    kappa: float
    delta_max: float
    s0: float

    def __post_init__(self) -> None:
        if self.quantity < 1 or self.quantity != int(self.quantity):
            raise ValueError(f"quantity must be an integer >= 1, got {self.quantity}")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be finite and > 0, got {self.horizon}")
        if not (self.kappa > 0.0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and > 0, got {self.kappa}")
        if not (0.0 < self.delta_max < self.s0):
            raise ValueError(
                f"delta_max must lie in (0, s0) = (0, {self.s0}), got {self.delta_max}"
            )


class IntensityIntegral(NamedTuple):
    """Integrated intensity over the window and its first two distance derivatives."""

    value: float
    d_delta: float
    d2_delta: float


def path_intensity(model: IntensityModel, delta: float, path) -> IntensityIntegral:
    """Integrated fill intensity along a discretely sampled price path.

    The integral of the stepwise-constant path interpolation: weights are the
    grid gaps, applied to left endpoints for simulated paths and to right
    endpoints for replayed tick cycles (``path.quadrature``), both referenced
    to the path's first value.  Exact in delta for the exponential family:
    ``d_delta = -decay * value`` and ``d2_delta = decay**2 * value``.
    """
    if not math.isfinite(delta):
        raise ValueError(f"delta must be finite, got {delta}")
    weights = np.diff(path.times)
    sampled = path.values[:-1] if path.quadrature == "left" else path.values[1:]
    reference = path.values[0]
    value = model.base_rate * float(
        weights @ np.exp(-model.decay * (sampled - reference + delta))
    )
    return IntensityIntegral(value, -model.decay * value, model.decay**2 * value)


def base_path_intensity(model: IntensityModel, path) -> float:
    """Integrated intensity at zero distance; scale by exp(-decay*delta) for others."""
    return path_intensity(model, 0.0, path).value


class RhoCondition(NamedTuple):
    """Outcome of the penalty increment-ratio admissibility condition."""

    holds: bool
    ratio_max: float
    ceiling: float


def rho_condition(penalty: PenaltySpec, q: int, mu_max: float) -> RhoCondition:
    """Check penalty(x)-penalty(x-1) <= rho * (penalty(x+1)-penalty(x)) on 1..q-1.

    The largest admissible rho is ``1 - pmf(mu, q-1)/cdf(mu, q-1)`` at the
    worst-case intensity ``mu_max``; the condition holds when the observed
    maximal increment ratio stays strictly below that ceiling.  The identity
    penalty has ratio exactly 1 and always fails: callers are expected to use
    the dedicated identity formulas, which do not need this condition.
    """
    if q < 2:
        raise ValueError(f"the increment-ratio condition needs q >= 2, got {q}")
    if mu_max < 0.0:
        raise ValueError(f"mu_max must be >= 0, got {mu_max}")
    x = np.arange(1.0, float(q))
    increments_low = np.asarray(penalty(x)) - np.asarray(penalty(x - 1.0))
    increments_high = np.asarray(penalty(x + 1.0)) - np.asarray(penalty(x))
    ratio_max = float(np.max(increments_low / increments_high))
    mass = poisson.cdf(mu_max, q - 1)
    if mass == 0.0:
        # pmf/cdf -> 1 as mu grows, so the ceiling collapses.
        ceiling = 0.0
    else:
        ceiling = 1.0 - poisson.pmf(mu_max, q - 1) / mass
    return RhoCondition(holds=bool(ratio_max < ceiling), ratio_max=ratio_max, ceiling=ceiling)


def fit_intensity(points: Sequence[tuple[float, float]]) -> IntensityModel:
    """Least-squares fit of log(rate) against distance.

    Expects at least two points with distinct distances and strictly positive
    rates; returns the exponential model with ``base_rate = exp(intercept)``
    and ``decay = -slope``.  A non-decaying fit is a calibration failure, not
    a model.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("calibration needs at least two (distance, rate) points")
    distances, rates = pts[:, 0], pts[:, 1]
    if np.any(~np.isfinite(distances)) or np.any(~np.isfinite(rates)):
        raise ValueError("calibration points must be finite")
    if np.any(rates <= 0.0):
        raise ValueError("calibration rates must be > 0 (log-linear fit)")
    if np.unique(distances).size < 2:
        raise ValueError("calibration distances are all identical: rank-deficient fit")
    slope, intercept = np.polyfit(distances, np.log(rates), 1)
    if not (-slope > 0.0):
        raise CalibrationError(
            f"fitted decay {-slope:g} is not positive; data shows no decay with distance"
        )
    return IntensityModel(base_rate=float(np.exp(intercept)), decay=float(-slope))


def read_calibration_csv(path: str | Path) -> list[tuple[float, float]]:
    """Read calibration points from a CSV with header ``distance,rate``."""
    path = Path(path)
    points: list[tuple[float, float]] = []
    try:
        with path.open(newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["distance", "rate"]:
                raise DataLoadError(f"{path}: expected header 'distance,rate', got {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    points.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError) as exc:
                    raise DataLoadError(f"{path}:{lineno}: malformed row {row!r}") from exc
    except OSError as exc:
        raise DataLoadError(f"cannot read calibration file {path}: {exc}") from exc
    return points
