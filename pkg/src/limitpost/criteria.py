"""Admissibility criteria for the learner: the structural quantity bound,
closed-form ceilings on the impact premium (monotony at the origin, global
pathwise monotony, convexity), the penalty increment-ratio condition, and
the sharper Monte-Carlo bounds.

The closed forms are deliberately conservative: they trade the path law for
worst-case covariance inequalities, so realistic parameter sets can violate
them while the learner still behaves.  The sharp bounds quantify that gap
with the same common-random-number path set the cost module uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import poisson
from .cost import PathBatch, curve_samples
from .market import (
    ExecutionSetup,
    IntensityModel,
    PenaltySpec,
    RhoCondition,
    rho_condition,
)

__all__ = [
    "StructuralCheck",
    "structural_check",
    "kappa_bound_origin",
    "kappa_bound_global",
    "ConvexityBound",
    "kappa_bound_convexity",
    "SharpBounds",
    "sharp_bounds_mc",
    "CriteriaReport",
    "build_report",
    "render_report",
]


@dataclass(frozen=True)
class StructuralCheck:
    """Quantity-vs-worst-case-intensity comparison, carried in log space
    because the threshold overflows doubles once decay * s0 gets large."""

    passed: bool
    log_threshold: float
    quantity: int

    @property
    def threshold(self) -> float:
        """Plain threshold value; inf when it exceeds double range."""
        try:
            return math.exp(self.log_threshold)
        except OverflowError:
            return math.inf


def _log_worst_case_mass(setup: ExecutionSetup, model: IntensityModel) -> float:
    """log of horizon * intensity(-s0), the largest achievable mean count."""
    return math.log(setup.horizon) + model.log_intensity(-setup.s0)


def structural_check(setup: ExecutionSetup, model: IntensityModel) -> StructuralCheck:
    """quantity >= 2 * horizon * intensity(-s0): the order must stand a real
    chance of not filling entirely within the window."""
    log_threshold = math.log(2.0) + _log_worst_case_mass(setup, model)
    return StructuralCheck(
        passed=math.log(setup.quantity) >= log_threshold,
        log_threshold=log_threshold,
        quantity=setup.quantity,
    )


def kappa_bound_origin(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    expected_terminal: float,
) -> float:
    """Ceiling on kappa that forces a descending cost at distance zero:
    (1 + k s0) / (k E[S_T] (penalty(q) - penalty(q-1)))."""
    if expected_terminal <= 0.0:
        raise ValueError(f"expected terminal price must be > 0, got {expected_terminal}")
    k = model.decay
    increment = penalty.increment(setup.quantity)
    return (1.0 + k * setup.s0) / (k * expected_terminal * increment)


def kappa_bound_global(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    price_sup: float,
) -> float:
    """Ceiling on kappa under which the gradient integrand is non-decreasing
    in delta for every path below ``price_sup``:
    (1 + k (s0 - delta_max)) / (k s* (penalty(q) - penalty(q-1))).

    The penalty increment factor belongs to the general penalty and drops to
    1 for the identity; the one published display with the two labels the
    other way around is inconsistent with its own derivation.
    """
    if price_sup <= 0.0:
        raise ValueError(f"price sup must be > 0, got {price_sup}")
    k = model.decay
    increment = penalty.increment(setup.quantity)
    return (1.0 + k * (setup.s0 - setup.delta_max)) / (k * price_sup * increment)


@dataclass(frozen=True)
class ConvexityBound:
    """Sufficient conditions for a convex cost on the whole depth interval."""

    log_quantity_threshold: float
    quantity_ok: bool
    kappa_ceiling: float
    rho: RhoCondition | None  # None for the identity penalty (condition not needed)

    @property
    def quantity_threshold(self) -> float:
        try:
            return math.exp(self.log_quantity_threshold)
        except OverflowError:
            return math.inf


def kappa_bound_convexity(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    expected_terminal: float,
) -> ConvexityBound:
    """Convexity ceiling 2 / (k E[S_T] penalty'(q)) together with the
    quantity threshold (which coincides with the structural one for the
    exponential intensity family: the curvature multiplier is exactly 2)."""
    if expected_terminal <= 0.0:
        raise ValueError(f"expected terminal price must be > 0, got {expected_terminal}")
    k = model.decay
    log_quantity_threshold = math.log(2.0) + _log_worst_case_mass(setup, model)
    kappa_ceiling = 2.0 / (k * expected_terminal * penalty.left_derivative(setup.quantity))
    rho: RhoCondition | None = None
    if not penalty.is_identity:
        log_mu_max = _log_worst_case_mass(setup, model)
        mu_max = math.exp(log_mu_max) if log_mu_max < 700.0 else math.inf
        if math.isinf(mu_max):
            # pmf/cdf ratio tends to 1, so the admissible-rho ceiling is 0.
            rho = RhoCondition(holds=False, ratio_max=math.nan, ceiling=0.0)
            x = np.arange(1.0, float(setup.quantity))
            if x.size:
                low = np.asarray(penalty(x)) - np.asarray(penalty(x - 1.0))
                high = np.asarray(penalty(x + 1.0)) - np.asarray(penalty(x))
                rho = RhoCondition(
                    holds=False, ratio_max=float(np.max(low / high)), ceiling=0.0
                )
        else:
            rho = rho_condition(penalty, setup.quantity, mu_max)
    return ConvexityBound(
        log_quantity_threshold=log_quantity_threshold,
        quantity_ok=math.log(setup.quantity) >= log_quantity_threshold,
        kappa_ceiling=kappa_ceiling,
        rho=rho,
    )


@dataclass(frozen=True, eq=False)
class SharpBounds:
    """Monte-Carlo versions of the kappa ceilings, with standard errors.

    ``origin_ceiling`` is the exact break-even premium for a descending cost
    at zero distance; ``convexity_ceiling`` is the minimum of the curvature
    ratio over the region where the impact part of the curvature is positive.
    """

    origin_ceiling: float
    origin_se: float
    convexity_ceiling: float | None
    convexity_se: float | None
    convexity_argmin: float | None
    positive_mask: np.ndarray
    deltas: np.ndarray
    n_paths: int
    note: str = ""


def _ratio_of_means(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Ratio of sample means with its delta-method standard error."""
    n = num.size
    mean_den = float(den.mean())
    ratio = float(num.mean()) / mean_den
    residual = num - ratio * den
    se = float(residual.std(ddof=1)) / (math.sqrt(n) * abs(mean_den))
    return ratio, se


def sharp_bounds_mc(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    source,
    n_paths: int,
    delta_grid: np.ndarray,
    threads: int = 1,
) -> SharpBounds:
    """Estimate the exact kappa ceilings by Monte Carlo on a common path set.

    The origin ceiling is the ratio of the impact-free part of the gradient
    at zero to the impact part.  The convexity ceiling scans
    curvature = A(delta) - kappa * B(delta) over the grid and minimizes
    A/B over {B > 0}; an empty region means the convexity condition puts no
    constraint on kappa there.
    """
    if n_paths < 100:
        raise ValueError(f"sharp bounds need at least 100 paths, got {n_paths}")
    delta_grid = np.asarray(delta_grid, dtype=float)
    batch = PathBatch.from_source(model, source, n_paths)

    q = setup.quantity
    k = model.decay
    mu0 = batch.base_intensity
    d_mu0 = -k * mu0
    below = poisson.cdf(mu0, q - 1)
    numerator = -q * poisson.sf(mu0, q) + (batch.initial * d_mu0 - mu0) * below
    denominator = (
        batch.terminal * d_mu0 * poisson.penalty_increment_mean(mu0, q, penalty)
    )
    origin_ceiling, origin_se = _ratio_of_means(numerator, denominator)

    samples = curve_samples(
        setup,
        model,
        penalty,
        delta_grid,
        batch,
        threads=threads,
        want=frozenset({"curvature_split"}),
    )
    a_mean = samples["curvature_a"].mean(axis=1)
    b_mean = samples["curvature_b"].mean(axis=1)
    positive = b_mean > 0.0
    if not np.any(positive):
        return SharpBounds(
            origin_ceiling=origin_ceiling,
            origin_se=origin_se,
            convexity_ceiling=None,
            convexity_se=None,
            convexity_argmin=None,
            positive_mask=positive,
            deltas=delta_grid,
            n_paths=n_paths,
            note="convexity unconstrained by B>0 region",
        )
    ratios = np.full(delta_grid.shape, np.inf)
    ratios[positive] = a_mean[positive] / b_mean[positive]
    arg = int(np.argmin(ratios))
    ceiling, ceiling_se = _ratio_of_means(
        samples["curvature_a"][arg], samples["curvature_b"][arg]
    )
    return SharpBounds(
        origin_ceiling=origin_ceiling,
        origin_se=origin_se,
        convexity_ceiling=ceiling,
        convexity_se=ceiling_se,
        convexity_argmin=float(delta_grid[arg]),
        positive_mask=positive,
        deltas=delta_grid,
        n_paths=n_paths,
    )


@dataclass(frozen=True, eq=False)
class CriteriaReport:
    """Every admissibility verdict for one parameter set, reproducible from
    the inputs and the recorded estimates."""

    structural: StructuralCheck
    kappa_origin_bound: float
    kappa_global_bound: float
    convexity: ConvexityBound
    kappa: float
    expected_terminal: float
    price_sup: float
    sharp: SharpBounds | None = None
    verdicts: dict = field(default_factory=dict)

    @property
    def all_conservative_ok(self) -> bool:
        keys = ("structural", "kappa_origin", "kappa_global", "kappa_convexity")
        return all(self.verdicts[key] for key in keys)


def build_report(
    setup: ExecutionSetup,
    model: IntensityModel,
    penalty: PenaltySpec,
    expected_terminal: float | None = None,
    price_sup: float | None = None,
    source=None,
    n_paths: int = 0,
    delta_grid: np.ndarray | None = None,
    threads: int = 1,
) -> CriteriaReport:
    """Run every criterion.  ``expected_terminal`` defaults to the starting
    price (exact for a driftless fair price); ``price_sup`` defaults to it
    too and should be the dataset maximum for replayed data.  Sharp bounds
    are estimated only when a path source is supplied."""
    expected_terminal = setup.s0 if expected_terminal is None else expected_terminal
    price_sup = setup.s0 if price_sup is None else price_sup
    structural = structural_check(setup, model)
    origin = kappa_bound_origin(setup, model, penalty, expected_terminal)
    global_bound = kappa_bound_global(setup, model, penalty, price_sup)
    convexity = kappa_bound_convexity(setup, model, penalty, expected_terminal)
    sharp = None
    if source is not None:
        if delta_grid is None:
            delta_grid = np.linspace(0.0, setup.delta_max, 50)
        sharp = sharp_bounds_mc(
            setup, model, penalty, source, n_paths, delta_grid, threads=threads
        )
    verdicts = {
        "structural": structural.passed,
        "kappa_origin": setup.kappa <= origin,
        "kappa_global": setup.kappa <= global_bound,
        "kappa_convexity": convexity.quantity_ok
        and setup.kappa <= convexity.kappa_ceiling
        and (convexity.rho is None or convexity.rho.holds),
    }
    if sharp is not None:
        verdicts["sharp_origin"] = setup.kappa < sharp.origin_ceiling
        if sharp.convexity_ceiling is not None:
            verdicts["sharp_convexity"] = setup.kappa < sharp.convexity_ceiling
    return CriteriaReport(
        structural=structural,
        kappa_origin_bound=origin,
        kappa_global_bound=global_bound,
        convexity=convexity,
        kappa=setup.kappa,
        expected_terminal=expected_terminal,
        price_sup=price_sup,
        sharp=sharp,
        verdicts=verdicts,
    )


def render_report(report: CriteriaReport) -> str:
    """Structured-text export: one ``key = value`` line per criterion fact."""
    lines = [
        f"kappa = {report.kappa:.17g}",
        f"expected_terminal = {report.expected_terminal:.17g}",
        f"price_sup = {report.price_sup:.17g}",
        f"structural.quantity = {report.structural.quantity}",
        f"structural.log_threshold = {report.structural.log_threshold:.17g}",
        f"structural.threshold = {report.structural.threshold:.17g}",
        f"structural.verdict = {'PASS' if report.verdicts['structural'] else 'FAIL'}",
        f"kappa_origin.bound = {report.kappa_origin_bound:.17g}",
        f"kappa_origin.verdict = {'PASS' if report.verdicts['kappa_origin'] else 'FAIL'}",
        f"kappa_global.bound = {report.kappa_global_bound:.17g}",
        f"kappa_global.verdict = {'PASS' if report.verdicts['kappa_global'] else 'FAIL'}",
        f"kappa_convexity.bound = {report.convexity.kappa_ceiling:.17g}",
        f"kappa_convexity.log_quantity_threshold = {report.convexity.log_quantity_threshold:.17g}",
        f"kappa_convexity.quantity_ok = {report.convexity.quantity_ok}",
        f"kappa_convexity.verdict = {'PASS' if report.verdicts['kappa_convexity'] else 'FAIL'}",
    ]
    if report.convexity.rho is not None:
        rho = report.convexity.rho
        lines += [
            f"rho_condition.ratio_max = {rho.ratio_max:.17g}",
            f"rho_condition.ceiling = {rho.ceiling:.17g}",
            f"rho_condition.verdict = {'HOLDS' if rho.holds else 'FAILS'}",
        ]
    if report.sharp is not None:
        sharp = report.sharp
        lines += [
            f"sharp.n_paths = {sharp.n_paths}",
            f"sharp.origin_ceiling = {sharp.origin_ceiling:.17g}",
            f"sharp.origin_se = {sharp.origin_se:.17g}",
            f"sharp_origin.verdict = {'PASS' if report.verdicts.get('sharp_origin') else 'FAIL'}",
        ]
        if sharp.convexity_ceiling is None:
            lines.append(f"sharp.convexity = {sharp.note}")
        else:
            lines += [
                f"sharp.convexity_ceiling = {sharp.convexity_ceiling:.17g}",
                f"sharp.convexity_se = {sharp.convexity_se:.17g}",
                f"sharp.convexity_argmin = {sharp.convexity_argmin:.17g}",
                f"sharp_convexity.verdict = "
                f"{'PASS' if report.verdicts.get('sharp_convexity') else 'FAIL'}",
            ]
    return "\n".join(lines) + "\n"
