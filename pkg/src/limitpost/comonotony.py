"""Empirical harness for the co-monotony machinery: covariance-sign tests
for monotone path functionals, pathwise monotonicity of the gradient
integrand, the unit-diffusion (Lamperti) change of state with its drift,
admissibility diagnostics for one-dimensional diffusions, and the minimal
Euler step count preserving monotone propagation.

Nothing here proves anything: covariance verdicts are statistical (they
carry standard errors and sample sizes) and act as regression tests -- for
an admissible diffusion a same-monotony pair with a covariance negative
beyond noise indicates a bug or an inadmissible model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .cost import PathBatch, curve_samples
from .market import ExecutionSetup, IntensityModel, PenaltySpec
from .paths import DiffusionSpec, PricePath, RngStream

__all__ = [
    "MonotoneFunctional",
    "terminal_value",
    "running_max",
    "running_min",
    "path_mean",
    "intensity_functional",
    "negated",
    "audit_monotone_declaration",
    "CovarianceEstimate",
    "estimate_covariance",
    "PathwiseMonotonyReport",
    "check_pathwise_gradient_monotone",
    "lamperti_map",
    "lamperti_inverse",
    "lamperti_beta",
    "AdmissibilityReport",
    "admissibility_report",
    "min_euler_steps",
    "bachelier",
    "black_scholes",
    "cev",
    "hull_white",
    "bounded_local_vol",
]


@dataclass(frozen=True)
class MonotoneFunctional:
    """A path functional with a declared monotony and growth exponent.

    The declaration is an auditable promise, not a proof: see
    :func:`audit_monotone_declaration`.
    """

    evaluator: Callable[[PricePath], float]
    declared_monotony: str  # "non-decreasing" | "non-increasing"
    growth_exponent: float = 1.0
    name: str = ""

    def __post_init__(self) -> None:
        if self.declared_monotony not in ("non-decreasing", "non-increasing"):
            raise ValueError(f"unknown monotony {self.declared_monotony!r}")
        if self.growth_exponent < 0.0:
            raise ValueError("growth exponent must be >= 0")

    def __call__(self, path: PricePath) -> float:
        return float(self.evaluator(path))


def terminal_value() -> MonotoneFunctional:
    return MonotoneFunctional(lambda p: p.terminal, "non-decreasing", 1.0, "terminal")


def running_max() -> MonotoneFunctional:
    return MonotoneFunctional(lambda p: float(np.max(p.values)), "non-decreasing", 1.0, "max")


def running_min() -> MonotoneFunctional:
    return MonotoneFunctional(lambda p: float(np.min(p.values)), "non-decreasing", 1.0, "min")


def path_mean() -> MonotoneFunctional:
    return MonotoneFunctional(lambda p: float(np.mean(p.values)), "non-decreasing", 1.0, "mean")


def intensity_functional(
    model: IntensityModel, reference: float, delta: float = 0.0
) -> MonotoneFunctional:
    """Integrated fill intensity at a fixed distance around a fixed reference
    price: pointwise-larger paths fill more slowly, so the functional is
    non-increasing.  The reference must be a constant, not the path's own
    first value, or the monotony claim breaks."""

    def evaluate(path: PricePath) -> float:
        weights = np.diff(path.times)
        sampled = path.values[:-1] if path.quadrature == "left" else path.values[1:]
        return model.base_rate * float(
            weights @ np.exp(-model.decay * (sampled - reference + delta))
        )

    return MonotoneFunctional(evaluate, "non-increasing", 1.0, f"intensity(delta={delta:g})")


def negated(functional: MonotoneFunctional) -> MonotoneFunctional:
    flipped = (
        "non-increasing"
        if functional.declared_monotony == "non-decreasing"
        else "non-decreasing"
    )
    return MonotoneFunctional(
        lambda p: -functional(p),
        flipped,
        functional.growth_exponent,
        f"-{functional.name}",
    )


def audit_monotone_declaration(
    functional: MonotoneFunctional,
    source,
    n_pairs: int = 100,
    bump_seed: int = 901,
) -> bool:
    """Spot-check the declared monotony on dominated path pairs.

    Each pair is a source path and the same path raised by a non-negative
    bump; the declared inequality must hold exactly on every pair.
    """
    gen = RngStream(bump_seed, 0).generator()
    for index, low in enumerate(source.iter_paths(n_pairs)):
        bump = np.abs(gen.standard_normal(low.values.size)) * 0.01 * np.mean(low.values)
        high = PricePath(
            times=low.times.copy(), values=low.values + bump, quadrature=low.quadrature
        )
        f_low, f_high = functional(low), functional(high)
        ok = f_low <= f_high if functional.declared_monotony == "non-decreasing" else f_low >= f_high
        if not ok:
            return False
    return True


@dataclass(frozen=True)
class CovarianceEstimate:
    """Sample covariance of two path functionals with a jackknife SE."""

    covariance: float
    standard_error: float
    n_paths: int

    @property
    def z_score(self) -> float:
        if self.standard_error == 0.0:
            return math.inf if self.covariance > 0 else -math.inf if self.covariance < 0 else 0.0
        return self.covariance / self.standard_error


def estimate_covariance(
    f: MonotoneFunctional, g: MonotoneFunctional, source, n_paths: int
) -> CovarianceEstimate:
    """Monte-Carlo covariance of f and g over the source's paths.

    The jackknife SE comes from closed-form leave-one-out covariances, so it
    costs O(n)."""
    if n_paths < 100:
        raise ValueError(f"need at least 100 paths for a meaningful SE, got {n_paths}")
    fx = np.empty(n_paths)
    gx = np.empty(n_paths)
    for i, path in enumerate(source.iter_paths(n_paths)):
        fx[i] = f(path)
        gx[i] = g(path)
    if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(gx))):
        raise ValueError("functional values must be finite")
    n = n_paths
    # centered two-pass sums: one-pass moment formulas cancel catastrophically
    # at price-scale values with covariances orders of magnitude smaller
    cf = fx - fx.mean()
    cg = gx - gx.mean()
    cross = float(cf @ cg)
    cov = cross / (n - 1)
    # closed-form leave-one-out covariances on the centered values, O(n)
    sum_cf, sum_cg = float(cf.sum()), float(cg.sum())
    mf = (sum_cf - cf) / (n - 1)
    mg = (sum_cg - cg) / (n - 1)
    loo = (cross - cf * cg - (n - 1) * mf * mg) / (n - 2)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return CovarianceEstimate(covariance=float(cov), standard_error=se, n_paths=n)


@dataclass(frozen=True, eq=False)
class PathwiseMonotonyReport:
    """Per-path verdicts of gradient-integrand monotonicity on a grid."""

    verdicts: np.ndarray
    pass_rate: float
    deltas: np.ndarray


def check_pathwise_gradient_monotone(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    delta_grid: np.ndarray,
    paths: Sequence[PricePath] | PathBatch,
    model_batch: IntensityModel | None = None,
) -> PathwiseMonotonyReport:
    """Check that the gradient integrand is non-decreasing in the distance
    for every supplied path, on the given grid.

    This is the pathwise drift condition behind the global-monotony kappa
    ceiling; callers may violate that ceiling deliberately to watch it fail.
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    if delta_grid.size < 2:
        raise ValueError("need at least two grid points")
    batch = (
        paths
        if isinstance(paths, PathBatch)
        else PathBatch.from_paths(model_batch or model, paths)
    )
    samples = curve_samples(
        setup, model, penalty, delta_grid, batch, want=frozenset({"gradient"})
    )["gradient"]
    scale = np.maximum(np.max(np.abs(samples), axis=0), 1.0)
    verdicts = np.all(np.diff(samples, axis=0) >= -1e-10 * scale[None, :], axis=0)
    return PathwiseMonotonyReport(
        verdicts=verdicts, pass_rate=float(np.mean(verdicts)), deltas=delta_grid
    )


def _vol_dx(spec: DiffusionSpec, t: float, x: float, h: float = 1e-6) -> float:
    if spec.vol_dx is not None:
        return float(spec.vol_dx(t, x))
    step = h * max(1.0, abs(x))
    return (spec.vol(t, x + step) - spec.vol(t, x - step)) / (2.0 * step)


def lamperti_map(spec: DiffusionSpec, x1: float, x: float, t: float = 0.0) -> float:
    """State change L(x) = integral_{x1}^{x} d(xi) / vol(t, xi).

    Adaptive quadrature to 1e-10 absolute; strictly increasing because the
    volatility is positive on the state interval.
    """
    lo, hi = spec.state_interval
    if not (lo < x < hi):
        raise ValueError(f"x = {x} outside the open state interval {spec.state_interval}")
    if x == x1:
        return 0.0
    value, _ = integrate.quad(
        lambda xi: 1.0 / spec.vol(t, xi), x1, x, epsabs=1e-10, epsrel=1e-12, limit=200
    )
    return float(value)


def lamperti_inverse(spec: DiffusionSpec, x1: float, y: float, t: float = 0.0) -> float:
    """Invert the state change by bisection on an adaptively grown bracket."""
    lo, hi = spec.state_interval
    if y == 0.0:
        return x1

    def objective(x: float) -> float:
        return lamperti_map(spec, x1, x, t) - y

    # grow a bracket toward the relevant endpoint
    if y > 0.0:
        a = x1
        width = max(1.0, abs(x1)) * 0.5
        b = x1 + width
        for _ in range(200):
            if b >= hi:
                b = hi - (hi - a) * 1e-12 if math.isfinite(hi) else b
            if objective(b) >= 0.0:
                break
            a = b
            width *= 2.0
            b = min(b + width, hi) if math.isfinite(hi) else b + width
        else:
            raise ValueError(f"state y = {y} is outside the image of the state change")
        lo_b, hi_b = a, b
    else:
        b = x1
        width = max(1.0, abs(x1)) * 0.5
        a = x1 - width
        for _ in range(200):
            if a <= lo:
                a = lo + (b - lo) * 1e-12 if math.isfinite(lo) else a
            if objective(a) <= 0.0:
                break
            b = a
            width *= 2.0
            a = max(a - width, lo) if math.isfinite(lo) else a - width
        else:
            raise ValueError(f"state y = {y} is outside the image of the state change")
        lo_b, hi_b = a, b
    root = optimize.brentq(objective, lo_b, hi_b, xtol=1e-13, rtol=8.9e-16, maxiter=200)
    return float(root)


def lamperti_beta(spec: DiffusionSpec, x1: float, y: float, t: float = 0.0) -> float:
    """Drift of the unit-diffusion image of the state: at x = L^{-1}(y),

        beta = drift/vol - integral_{x1}^{x} vol_t / vol^2 - vol_x / 2.

    The time-derivative term vanishes for time-homogeneous coefficients.
    """
    x = lamperti_inverse(spec, x1, y, t)
    value = spec.drift(t, x) / spec.vol(t, x) - 0.5 * _vol_dx(spec, t, x)
    if spec.vol_dt is not None:
        correction, _ = integrate.quad(
            lambda xi: spec.vol_dt(t, xi) / spec.vol(t, xi) ** 2,
            x1,
            x,
            epsabs=1e-10,
            epsrel=1e-12,
            limit=200,
        )
        value -= correction
    return float(value)


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    """Grid diagnostics for the unit-diffusion drift and endpoint behaviour.

    ``slope_min``/``slope_max`` bound the drift's state-derivative surrogate
    drift_x - (drift*vol_x + vol_t)/vol - vol*vol_xx/2 over the grid;
    ``endpoint_divergence`` reports, per endpoint, whether the reciprocal
    volatility integral appears to diverge (a heuristic numeric check of an
    exact integral condition, and labelled as such).
    """

    slope_min: float
    slope_max: float
    bounded: bool
    non_negative: bool
    endpoint_divergence: tuple[bool, bool]
    endpoint_rates: tuple[float, float]
    admissible: bool
    heuristic: str = "heuristic: endpoint divergence probed numerically on a geometric mesh"


def _slope_surrogate(spec: DiffusionSpec, t: float, x: float) -> float:
    h = 1e-5 * max(1.0, abs(x))
    if spec.drift_dx is not None:
        b_x = float(spec.drift_dx(t, x))
    else:
        b_x = (spec.drift(t, x + h) - spec.drift(t, x - h)) / (2.0 * h)
    s = float(spec.vol(t, x))
    s_x = _vol_dx(spec, t, x)
    if spec.vol_dxx is not None:
        s_xx = float(spec.vol_dxx(t, x))
    else:
        s_xx = (spec.vol(t, x + h) - 2.0 * s + spec.vol(t, x - h)) / (h * h)
    s_t = float(spec.vol_dt(t, x)) if spec.vol_dt is not None else 0.0
    return b_x - (spec.drift(t, x) * s_x + s_t) / s - 0.5 * s * s_xx


def _endpoint_diverges(
    spec: DiffusionSpec, x1: float, endpoint: float, t: float, levels: int = 8
) -> tuple[bool, float]:
    """Integrate 1/vol toward the endpoint on a geometric mesh; divergence is
    called when the per-level increments stop decaying geometrically (median
    level-to-level ratio >= 0.9 covers logarithmic and power divergence)."""
    increments = []
    previous = x1
    for j in range(1, levels + 1):
        if math.isfinite(endpoint):
            target = endpoint + (x1 - endpoint) * 4.0 ** (-j)
        else:
            target = x1 + math.copysign(4.0**j, endpoint - x1) * max(1.0, abs(x1))
        piece, _ = integrate.quad(
            lambda xi: 1.0 / spec.vol(t, xi), previous, target, epsabs=1e-12, limit=200
        )
        increments.append(abs(piece))
        previous = target
    head = np.asarray(increments[1:])
    decay = head[1:] / np.maximum(head[:-1], 1e-300)
    rate = float(np.median(decay))
    return bool(rate >= 0.9), rate


def admissibility_report(
    spec: DiffusionSpec,
    t_grid: Sequence[float],
    x_grid: Sequence[float],
    x1: float | None = None,
) -> AdmissibilityReport:
    """Evaluate the drift-slope surrogate on the grid and probe both state
    endpoints for divergence of the reciprocal-volatility integral."""
    t_grid = np.asarray(t_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    slopes = np.asarray(
        [[_slope_surrogate(spec, t, x) for x in x_grid] for t in t_grid], dtype=float
    )
    slope_min, slope_max = float(slopes.min()), float(slopes.max())
    bounded = bool(np.all(np.isfinite(slopes)))
    x1 = float(np.median(x_grid)) if x1 is None else x1
    lo, hi = spec.state_interval
    t0 = float(t_grid[0])
    lo_div, lo_rate = _endpoint_diverges(spec, x1, lo, t0)
    hi_div, hi_rate = _endpoint_diverges(spec, x1, hi, t0)
    return AdmissibilityReport(
        slope_min=slope_min,
        slope_max=slope_max,
        bounded=bounded,
        non_negative=bool(slope_min >= -1e-12),
        endpoint_divergence=(lo_div, hi_div),
        endpoint_rates=(lo_rate, hi_rate),
        admissible=bounded and lo_div and hi_div,
    )


def min_euler_steps(
    spec: DiffusionSpec,
    horizon: float,
    t_grid: Sequence[float],
    y_grid: Sequence[float],
    x1: float = 1.0,
    beta: Callable[[float, float], float] | None = None,
) -> int:
    """Smallest step count m making y + (horizon/m) * beta(t, y) non-decreasing
    in y over the grid; 1 when beta is already non-decreasing."""
    if horizon <= 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    t_grid = np.asarray(t_grid, dtype=float)
    y_grid = np.asarray(y_grid, dtype=float)
    if y_grid.size < 2:
        raise ValueError("need at least two y-grid points")
    if beta is None:
        beta_fn = lambda t, y: lamperti_beta(spec, x1, y, t)
    else:
        beta_fn = beta
    worst = math.inf
    for t in t_grid:
        values = np.asarray([beta_fn(float(t), float(y)) for y in y_grid])
        slopes = np.diff(values) / np.diff(y_grid)
        worst = min(worst, float(slopes.min()))
    if worst >= 0.0:
        return 1
    need = horizon * (-worst)
    # guard against float noise promoting an exactly attained bound
    return max(1, math.ceil(need - 1e-9 * max(1.0, need)))


def bachelier(mu: float, sigma: float) -> DiffusionSpec:
    """Constant-coefficient arithmetic model on the whole line."""
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    return DiffusionSpec(
        drift=lambda t, x: mu + 0.0 * x,
        vol=lambda t, x: sigma + 0.0 * x,
        state_interval=(-math.inf, math.inf),
        drift_dx=lambda t, x: 0.0 * x,
        vol_dx=lambda t, x: 0.0 * x,
        vol_dxx=lambda t, x: 0.0 * x,
    )


def black_scholes(r: float, theta: float) -> DiffusionSpec:
    """Geometric model on (0, inf); its unit-diffusion drift is constant."""
    if theta <= 0.0:
        raise ValueError("theta must be > 0")
    return DiffusionSpec(
        drift=lambda t, x: r * x,
        vol=lambda t, x: theta * x,
        state_interval=(0.0, math.inf),
        drift_dx=lambda t, x: r + 0.0 * x,
        vol_dx=lambda t, x: theta + 0.0 * x,
        vol_dxx=lambda t, x: 0.0 * x,
    )


def cev(r: float, theta: float, alpha: float) -> DiffusionSpec:
    """Constant-elasticity model on (0, inf), 0 < alpha < 1.

    The reciprocal-volatility integral converges at 0+, so the admissibility
    diagnostics must flag the lower endpoint.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if theta <= 0.0:
        raise ValueError("theta must be > 0")
    return DiffusionSpec(
        drift=lambda t, x: r * x,
        vol=lambda t, x: theta * np.asarray(x) ** alpha,
        state_interval=(0.0, math.inf),
        drift_dx=lambda t, x: r + 0.0 * x,
        vol_dx=lambda t, x: theta * alpha * np.asarray(x) ** (alpha - 1.0),
        vol_dxx=lambda t, x: theta * alpha * (alpha - 1.0) * np.asarray(x) ** (alpha - 2.0),
    )


def hull_white(r: float, vol_level, vol_level_dt=None) -> DiffusionSpec:
    """Geometric model with a deterministic time-dependent volatility level
    ``vol_level(t) > 0``.  Co-monotony transfers through the deterministic
    time change, so this family belongs to the shipped admissible battery."""

    def vol(t, x):
        return vol_level(t) * np.asarray(x)

    spec_vol_dt = None
    if vol_level_dt is not None:
        spec_vol_dt = lambda t, x: vol_level_dt(t) * np.asarray(x)
    return DiffusionSpec(
        drift=lambda t, x: r * np.asarray(x),
        vol=vol,
        state_interval=(0.0, math.inf),
        drift_dx=lambda t, x: r + 0.0 * np.asarray(x),
        vol_dx=lambda t, x: vol_level(t) + 0.0 * np.asarray(x),
        vol_dxx=lambda t, x: 0.0 * np.asarray(x),
        vol_dt=spec_vol_dt,
    )


def bounded_local_vol(r: float, base: float, amplitude: float, scale: float) -> DiffusionSpec:
    """Geometric model with a smooth, bounded, positive local volatility:
    vol(x) = (base + amplitude * tanh(x / scale)) * x on (0, inf)."""
    if base <= 0.0 or amplitude < 0.0 or base - amplitude <= 0.0:
        raise ValueError("need base > amplitude >= 0 for a positive volatility")
    if scale <= 0.0:
        raise ValueError("scale must be > 0")

    def level(x):
        return base + amplitude * np.tanh(np.asarray(x) / scale)

    def level_dx(x):
        return amplitude / (np.cosh(np.asarray(x) / scale) ** 2 * scale)

    def level_dxx(x):
        x = np.asarray(x)
        return (
            -2.0
            * amplitude
            * np.tanh(x / scale)
            / (np.cosh(x / scale) ** 2 * scale**2)
        )

    return DiffusionSpec(
        drift=lambda t, x: r * np.asarray(x),
        vol=lambda t, x: level(x) * np.asarray(x),
        state_interval=(0.0, math.inf),
        drift_dx=lambda t, x: r + 0.0 * np.asarray(x),
        vol_dx=lambda t, x: level(x) + np.asarray(x) * level_dx(x),
        vol_dxx=lambda t, x: 2.0 * level_dx(x) + np.asarray(x) * level_dxx(x),
    )
