"""Penalized execution cost: the path-conditional cost, the gradient and
curvature integrands, and Monte-Carlo curve estimation with common random
numbers.

Pre-conditioning on the price path reduces the cost to exact Poisson sums:
with ``mu`` the integrated fill intensity of the path at distance ``delta``,

    cost(delta | path) = (x0 - delta) * E[min(q, N)]
                         + kappa * xT * E[penalty((q - N)_+)]

and the gradient/curvature integrands follow by differentiating through
``mu(delta)``.  Nothing inside a path is sampled; the path is the only
random input, which is what makes common-random-number reuse across the
distance grid exact.

The identity penalty admits dedicated, algebraically reduced formulas; both
code paths are kept and must agree to machine precision when fed the
identity penalty (``formula="general"`` vs ``formula="identity"``).
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from . import poisson
from .market import ExecutionSetup, IntensityModel, PenaltySpec, base_path_intensity
from .paths import PricePath

__all__ = [
    "PathBatch",
    "CostCurve",
    "conditional_cost",
    "gradient_integrand",
    "curvature_integrand",
    "mc_cost_curve",
    "grid_argmin",
]

Formula = Literal["auto", "general", "identity"]


@dataclass(frozen=True, eq=False)
class PathBatch:
    """The per-path statistics the cost formulas need: integrated intensity
    at zero distance (exponentially rescaled for any other distance), the
    initial reference price and the terminal price."""

    base_intensity: np.ndarray
    initial: np.ndarray
    terminal: np.ndarray

    def __post_init__(self) -> None:
        for name in ("base_intensity", "initial", "terminal"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        if not (self.base_intensity.shape == self.initial.shape == self.terminal.shape):
            raise ValueError("batch arrays must share one shape")
        if np.any(~np.isfinite(self.base_intensity)) or np.any(self.base_intensity < 0.0):
            raise ValueError("base intensities must be finite and >= 0")

    @property
    def n_paths(self) -> int:
        return int(self.base_intensity.size)

    @classmethod
    def from_paths(cls, model: IntensityModel, paths: Iterable[PricePath]) -> "PathBatch":
        base, x0, xt = [], [], []
        for path in paths:
            base.append(base_path_intensity(model, path))
            x0.append(path.initial)
            xt.append(path.terminal)
        if not base:
            raise ValueError("empty path collection")
        return cls(np.asarray(base), np.asarray(x0), np.asarray(xt))

    @classmethod
    def from_values_block(
        cls,
        model: IntensityModel,
        times: np.ndarray,
        values: np.ndarray,
        quadrature: str = "left",
    ) -> "PathBatch":
        """Vectorized batch over an (n_paths, m+1) block on a shared grid."""
        weights = np.diff(np.asarray(times, dtype=float))
        block = np.asarray(values, dtype=float)
        sampled = block[:, :-1] if quadrature == "left" else block[:, 1:]
        reference = block[:, :1]
        base = model.base_rate * (np.exp(-model.decay * (sampled - reference)) @ weights)
        return cls(base, block[:, 0].copy(), block[:, -1].copy())

    @classmethod
    def from_source(cls, model: IntensityModel, source, n_paths: int) -> "PathBatch":
        """Prefer the source's vectorized block; fall back to path iteration."""
        if hasattr(source, "values_block"):
            return cls.from_values_block(
                model, source.times, source.values_block(n_paths), source.quadrature
            )
        if hasattr(source, "iter_paths"):
            return cls.from_paths(model, source.iter_paths(n_paths))
        raise TypeError(f"unsupported path source {type(source).__name__}")


def _resolve_formula(penalty: PenaltySpec, formula: Formula) -> str:
    if formula == "auto":
        return "identity" if penalty.is_identity else "general"
    if formula == "identity" and not penalty.is_identity:
        raise ValueError("identity formulas are only valid for the identity penalty")
    return formula


def _per_path_terms(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    delta: float,
    batch: PathBatch,
    formula: str,
    want: frozenset,
) -> dict[str, np.ndarray]:
    """All requested per-path quantities at one distance.

    ``want`` selects among {"cost", "gradient", "curvature", "curvature_split"};
    shared Poisson factors are computed once.
    """
    q = setup.quantity
    kappa = setup.kappa
    k = model.decay
    mu = batch.base_intensity * np.exp(-k * delta)
    x0 = batch.initial
    xt = batch.terminal
    d_mu = -k * mu
    d2_mu = k * k * mu

    below = poisson.cdf(mu, q - 1)  # P(N <= q-1)
    out: dict[str, np.ndarray] = {}

    if "cost" in want:
        filled = q * poisson.sf(mu, q) + mu * below
        out["cost"] = (x0 - delta) * filled + kappa * xt * poisson.expected_penalty(
            mu, q, penalty
        )

    if "gradient" in want:
        overflow = q * poisson.sf(mu, q)
        if formula == "identity":
            out["gradient"] = -overflow + ((x0 - delta - kappa * xt) * d_mu - mu) * below
        else:
            increment = poisson.penalty_increment_mean(mu, q, penalty)
            out["gradient"] = (
                -overflow + (d_mu * (x0 - delta) - mu) * below - kappa * xt * d_mu * increment
            )

    if "curvature" in want or "curvature_split" in want:
        at_edge = poisson.pmf(mu, q - 1)  # P(N = q-1)
        if formula == "identity":
            front = x0 - delta - kappa * xt
            curvature = (front * d2_mu - 2.0 * d_mu) * below - front * d_mu**2 * at_edge
            if "curvature_split" in want:
                # identity penalty: increment mean = below, second difference = at_edge
                a_part = ((x0 - delta) * d2_mu - 2.0 * d_mu) * below - (
                    x0 - delta
                ) * d_mu**2 * at_edge
                b_part = xt * (d2_mu * below - d_mu**2 * at_edge)
        else:
            increment = poisson.penalty_increment_mean(mu, q, penalty)
            second = poisson.penalty_second_difference_mean(mu, q, penalty)
            a_part = ((x0 - delta) * d2_mu - 2.0 * d_mu) * below - (
                x0 - delta
            ) * d_mu**2 * at_edge
            b_part = xt * (d2_mu * increment - d_mu**2 * second)
            curvature = a_part - kappa * b_part
        if "curvature" in want:
            out["curvature"] = curvature
        if "curvature_split" in want:
            out["curvature_a"] = a_part
            out["curvature_b"] = b_part

    return out


def conditional_cost(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    delta: float,
    intensity: float,
    x0: float,
    xt: float,
) -> float:
    """Execution cost given the path summary (integrated intensity at this
    distance, initial and terminal price)."""
    if intensity < 0.0:
        raise ValueError(f"intensity must be >= 0, got {intensity}")
    q = setup.quantity
    filled = q * poisson.sf(intensity, q) + intensity * poisson.cdf(intensity, q - 1)
    residual = poisson.expected_penalty(intensity, q, penalty)
    return float((x0 - delta) * filled + setup.kappa * xt * residual)


def _single_path_value(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    delta: float,
    path: PricePath,
    formula: Formula,
    key: str,
) -> float:
    batch = PathBatch.from_paths(model, [path])
    resolved = _resolve_formula(penalty, formula)
    return float(
        _per_path_terms(setup, model, penalty, delta, batch, resolved, frozenset([key]))[key][0]
    )


def gradient_integrand(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    delta: float,
    path: PricePath,
    formula: Formula = "auto",
) -> float:
    """The quantity whose path-expectation is the cost derivative in delta.

    Three forces: a repulsion when the order would have filled whole, an
    attraction toward the fair price through the lost execution intensity,
    and an attraction through the marginal impact of the residual quantity.
    """
    return _single_path_value(setup, model, penalty, delta, path, formula, "gradient")


def curvature_integrand(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    delta: float,
    path: PricePath,
    formula: Formula = "auto",
) -> float:
    """The quantity whose path-expectation is the second derivative in delta."""
    return _single_path_value(setup, model, penalty, delta, path, formula, "curvature")


@dataclass(frozen=True, eq=False)
class CostCurve:
    """Monte-Carlo estimates of the cost and its first two derivatives on a
    distance grid, with per-point standard errors, all from one common set
    of paths."""

    deltas: np.ndarray
    cost: np.ndarray
    cost_se: np.ndarray
    gradient: np.ndarray
    gradient_se: np.ndarray
    curvature: np.ndarray
    curvature_se: np.ndarray
    n_paths: int

    def __post_init__(self) -> None:
        arrays = [
            self.deltas,
            self.cost,
            self.cost_se,
            self.gradient,
            self.gradient_se,
            self.curvature,
            self.curvature_se,
        ]
        if any(np.asarray(a).shape != np.asarray(arrays[0]).shape for a in arrays):
            raise ValueError("curve arrays must share one shape")
        if np.any(np.diff(self.deltas) <= 0.0):
            raise ValueError("distance grid must be strictly increasing")
        for name in ("cost_se", "gradient_se", "curvature_se"):
            if np.any(np.asarray(getattr(self, name)) < 0.0):
                raise ValueError(f"{name} must be >= 0")
        for a in arrays:
            if np.any(~np.isfinite(np.asarray(a))):
                raise ValueError("curve estimates must be finite")

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["delta", "c", "c_se", "cp", "cp_se", "cpp", "cpp_se"])
            for row in zip(
                self.deltas,
                self.cost,
                self.cost_se,
                self.gradient,
                self.gradient_se,
                self.curvature,
                self.curvature_se,
            ):
                writer.writerow([f"{v:.17g}" for v in row])


def _chunk_slices(n: int, threads: int) -> list[slice]:
    chunks = max(1, min(threads, n))
    bounds = np.linspace(0, n, chunks + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def curve_samples(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    deltas: np.ndarray,
    batch: PathBatch,
    threads: int = 1,
    formula: Formula = "auto",
    want: frozenset = frozenset({"cost", "gradient", "curvature"}),
) -> dict[str, np.ndarray]:
    """Per-path samples of the requested quantities on the grid, shape
    (len(deltas), n_paths).  Chunking over paths never changes the result:
    chunks are concatenated in order and reduced once by the caller."""
    deltas = np.asarray(deltas, dtype=float)
    resolved = _resolve_formula(penalty, formula)

    def eval_chunk(sl: slice) -> dict[str, np.ndarray]:
        sub = PathBatch(
            batch.base_intensity[sl], batch.initial[sl], batch.terminal[sl]
        )
        rows: dict[str, list[np.ndarray]] = {}
        for delta in deltas:
            terms = _per_path_terms(setup, model, penalty, float(delta), sub, resolved, want)
            for key, arr in terms.items():
                rows.setdefault(key, []).append(arr)
        return {key: np.vstack(stack) for key, stack in rows.items()}

    slices = _chunk_slices(batch.n_paths, threads)
    if len(slices) == 1:
        return eval_chunk(slices[0])
    with ThreadPoolExecutor(max_workers=len(slices)) as pool:
        parts = list(pool.map(eval_chunk, slices))
    return {
        key: np.concatenate([part[key] for part in parts], axis=1) for key in parts[0]
    }


def _mean_and_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = samples.shape[1]
    mean = samples.mean(axis=1)
    if n < 2:
        return mean, np.zeros_like(mean)
    se = samples.std(axis=1, ddof=1) / np.sqrt(n)
    # identical samples have exactly zero error; the mean's own rounding must
    # not manufacture a spurious one (the sigma = 0 sources hit this)
    se[np.ptp(samples, axis=1) == 0.0] = 0.0
    return mean, se


def mc_cost_curve(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    deltas: np.ndarray,
    source,
    n_paths: int,
    threads: int = 1,
    formula: Formula = "auto",
) -> CostCurve:
    """Estimate cost, gradient and curvature on the grid from ``n_paths``
    paths of ``source``, the same paths at every grid point (common random
    numbers).  Reports one standard error per point and quantity."""
    deltas = np.asarray(deltas, dtype=float)
    if n_paths < 2:
        raise ValueError(f"need at least 2 paths for standard errors, got {n_paths}")
    if deltas.size < 1:
        raise ValueError("empty distance grid")
    if np.any(deltas < 0.0) or np.any(deltas > setup.delta_max):
        raise ValueError("distance grid must lie inside [0, delta_max]")
    batch = PathBatch.from_source(model, source, n_paths)
    samples = curve_samples(setup, model, penalty, deltas, batch, threads, formula)
    cost, cost_se = _mean_and_se(samples["cost"])
    gradient, gradient_se = _mean_and_se(samples["gradient"])
    curvature, curvature_se = _mean_and_se(samples["curvature"])
    return CostCurve(
        deltas=deltas.copy(),
        cost=cost,
        cost_se=cost_se,
        gradient=gradient,
        gradient_se=gradient_se,
        curvature=curvature,
        curvature_se=curvature_se,
        n_paths=n_paths,
    )


def grid_argmin(curve: CostCurve) -> tuple[float, float]:
    """Smallest grid distance attaining the minimal estimated cost."""
    index = int(np.argmin(curve.cost))  # argmin takes the first of tied minima
    return float(curve.deltas[index]), float(curve.cost[index])
