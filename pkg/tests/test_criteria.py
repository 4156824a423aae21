import math

import numpy as np
import pytest

from limitpost import poisson
from limitpost.criteria import (
    build_report,
    kappa_bound_convexity,
    kappa_bound_global,
    kappa_bound_origin,
    render_report,
    sharp_bounds_mc,
    structural_check,
)
from limitpost.market import ExecutionSetup, IntensityModel, PenaltySpec
from limitpost.paths import BrownianSource

IDENTITY = PenaltySpec.identity()
IMPACT = PenaltySpec.exponential_impact(1.0, 0.01)


def impact_increment(q: int) -> float:
    """Independent evaluation of penalty(q) - penalty(q-1) for the shipped impact."""
    def phi(x):
        return (1.0 + math.exp(0.01 * x)) * x

    return phi(q) - phi(q - 1)


class TestStructural:
    def test_reference_setting_fails_with_huge_threshold(self, setting1):
        setup, model, _ = setting1
        check = structural_check(setup, model)
        assert not check.passed
        # threshold is 2 * 5 * 5 * e^{100}
        assert check.log_threshold == pytest.approx(math.log(50.0) + 100.0, rel=1e-14)
        assert check.threshold == pytest.approx(50.0 * math.exp(100.0), rel=1e-12)

    def test_flat_intensity_passes(self):
        setup = ExecutionSetup(quantity=11, horizon=1.0, kappa=1.0, delta_max=0.5, s0=1.0)
        model = IntensityModel(base_rate=5.0, decay=1e-9)
        check = structural_check(setup, model)
        assert check.passed
        assert check.threshold == pytest.approx(10.0, rel=1e-6)

    def test_small_parameters_pass(self):
        setup = ExecutionSetup(quantity=3, horizon=1.0, kappa=1.0, delta_max=0.5, s0=1.0)
        model = IntensityModel(base_rate=1.0, decay=0.01)
        check = structural_check(setup, model)
        assert check.passed
        assert check.threshold == pytest.approx(2.0 * math.exp(0.01), rel=1e-12)

    def test_overflowing_threshold_is_inf(self):
        setup = ExecutionSetup(quantity=100, horizon=15.0, kappa=1.0, delta_max=0.08, s0=30.0)
        model = IntensityModel(base_rate=0.02, decay=50.0)
        check = structural_check(setup, model)
        assert not check.passed
        assert math.isinf(check.threshold)
        assert math.isfinite(check.log_threshold)


class TestOriginBound:
    def test_identity_closed_form(self):
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=1.0, delta_max=3.0, s0=100.0)
        model = IntensityModel(5.0, 1.0)
        bound = kappa_bound_origin(setup, model, IDENTITY, expected_terminal=100.0)
        assert bound == pytest.approx(1.01, abs=1e-12)

    def test_impact_closed_form(self, setting1):
        setup, model, penalty = setting1
        bound = kappa_bound_origin(setup, model, penalty, expected_terminal=100.0)
        expected = 101.0 / (100.0 * impact_increment(10))
        assert bound == pytest.approx(expected, abs=1e-12)
        assert bound == pytest.approx(0.4582, abs=5e-5)
        # the reference premium deliberately exceeds this conservative ceiling
        assert setup.kappa > bound

    def test_inverse_scaling_in_terminal_price(self, setting1):
        setup, model, penalty = setting1
        single = kappa_bound_origin(setup, model, penalty, expected_terminal=100.0)
        double = kappa_bound_origin(setup, model, penalty, expected_terminal=200.0)
        assert double == pytest.approx(single / 2.0, rel=1e-14)


class TestGlobalBound:
    def test_identity_closed_form(self):
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=1.0, delta_max=5.0, s0=100.0)
        model = IntensityModel(5.0, 1.0)
        bound = kappa_bound_global(setup, model, IDENTITY, price_sup=101.0)
        assert bound == pytest.approx(96.0 / 101.0, abs=1e-12)
        assert bound == pytest.approx(0.9505, abs=5e-5)

    def test_impact_closed_form(self):
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=1.0, delta_max=5.0, s0=100.0)
        model = IntensityModel(5.0, 1.0)
        bound = kappa_bound_global(setup, model, IMPACT, price_sup=101.0)
        expected = 96.0 / (101.0 * impact_increment(10))
        assert bound == pytest.approx(expected, abs=1e-12)
        assert bound == pytest.approx(0.4313, abs=1e-4)

    def test_full_depth_limit(self):
        s0 = 101.0
        setup = ExecutionSetup(
            quantity=10, horizon=5.0, kappa=1.0, delta_max=s0 - 1e-9, s0=s0
        )
        model = IntensityModel(5.0, 1.0 / 101.0)
        bound = kappa_bound_global(setup, model, IDENTITY, price_sup=101.0)
        assert bound == pytest.approx(1.0, abs=1e-8)

    def test_never_above_origin_bound_at_matched_inputs(self):
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=1.0, delta_max=5.0, s0=100.0)
        model = IntensityModel(5.0, 1.0)
        origin = kappa_bound_origin(setup, model, IDENTITY, expected_terminal=100.0)
        global_ = kappa_bound_global(setup, model, IDENTITY, price_sup=100.0)
        assert global_ <= origin


class TestConvexityBound:
    def test_identity_ceiling(self):
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=1.0, delta_max=3.0, s0=100.0)
        model = IntensityModel(5.0, 1.0)
        bound = kappa_bound_convexity(setup, model, IDENTITY, expected_terminal=100.0)
        assert bound.kappa_ceiling == pytest.approx(0.02, abs=1e-14)
        assert bound.rho is None

    def test_quantity_threshold_multiplier_is_two(self, setting1):
        # all decay bounds coincide, so the curvature multiplier is exactly 2
        setup, model, penalty = setting1
        bound = kappa_bound_convexity(setup, model, penalty, expected_terminal=100.0)
        assert bound.log_quantity_threshold == pytest.approx(
            structural_check(setup, model).log_threshold, rel=1e-15
        )

    def test_impact_ceiling_uses_left_derivative(self, setting1):
        setup, model, penalty = setting1
        bound = kappa_bound_convexity(setup, model, penalty, expected_terminal=100.0)
        expected = 2.0 / (1.0 * 100.0 * penalty.left_derivative(10))
        assert bound.kappa_ceiling == pytest.approx(expected, rel=1e-14)
        assert bound.rho is not None
        assert not bound.rho.holds  # worst-case intensity is astronomically large

    def test_rho_runs_for_feasible_intensity(self):
        setup = ExecutionSetup(quantity=10, horizon=1.0, kappa=0.01, delta_max=0.5, s0=1.0)
        model = IntensityModel(base_rate=0.5, decay=0.5)
        bound = kappa_bound_convexity(setup, model, IMPACT, expected_terminal=1.0)
        assert bound.rho is not None and bound.rho.holds
        assert bound.quantity_ok


class TestSharpBounds:
    def test_constant_path_closed_form(self, setting1):
        setup, model, penalty = setting1
        source = BrownianSource(100.0, 0.0, 5.0, 20, seed=1)
        sharp = sharp_bounds_mc(setup, model, penalty, source, 200, np.linspace(0, 3, 40))
        mu = 25.0
        numerator = (
            -10.0 * poisson.sf(mu, 10)
            + (100.0 * (-mu) - mu) * poisson.cdf(mu, 9)
        )
        denominator = 100.0 * (-mu) * poisson.penalty_increment_mean(mu, 10, penalty)
        assert sharp.origin_ceiling == pytest.approx(numerator / denominator, abs=1e-10)
        assert sharp.origin_se == 0.0

    def test_identity_branch_reduction(self, setting2):
        setup, model, penalty = setting2
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=2)
        sharp = sharp_bounds_mc(setup, model, penalty, source, 500, np.linspace(0, 3, 30))
        assert sharp.origin_ceiling > 0.0
        assert sharp.origin_se > 0.0

    def test_origin_ceiling_consistent_with_gradient_sign(self, sim_model, sim_penalty):
        # premium below the sharp ceiling <=> descending estimated cost at zero
        from limitpost.cost import mc_cost_curve

        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=0.2, delta_max=3.0, s0=100.0)
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=20260810)
        sharp = sharp_bounds_mc(
            setup, sim_model, sim_penalty, source, 10_000, np.linspace(0, 3, 20)
        )
        assert setup.kappa < sharp.origin_ceiling - 3.0 * sharp.origin_se
        curve = mc_cost_curve(
            setup, sim_model, sim_penalty, np.linspace(0.0, 0.5, 6), source, 10_000
        )
        assert curve.gradient[0] < -3.0 * curve.gradient_se[0]

    def test_empty_positive_region_reported(self, sim_model):
        # tiny kappa-weighted impact term can stay negative on a short grid
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=12.0, delta_max=3.0, s0=100.0)
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=3)
        sharp = sharp_bounds_mc(
            setup, sim_model, PenaltySpec.identity(), source, 200, np.linspace(2.0, 3.0, 10)
        )
        if sharp.convexity_ceiling is None:
            assert "unconstrained" in sharp.note
        else:
            assert np.any(sharp.positive_mask)


class TestReport:
    def test_build_and_render(self, setting1):
        setup, model, penalty = setting1
        report = build_report(setup, model, penalty)
        assert not report.verdicts["structural"]
        assert not report.verdicts["kappa_origin"]
        assert not report.all_conservative_ok
        text = render_report(report)
        assert "structural.verdict = FAIL" in text
        assert "kappa_origin.bound" in text
        assert "rho_condition" in text

    def test_defaults_use_start_price(self, setting1):
        setup, model, penalty = setting1
        report = build_report(setup, model, penalty)
        assert report.expected_terminal == setup.s0
        assert report.price_sup == setup.s0

    def test_sharp_section_present_with_source(self, setting2):
        setup, model, penalty = setting2
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=4)
        report = build_report(
            setup, model, penalty, source=source, n_paths=300,
            delta_grid=np.linspace(0, 3, 15),
        )
        assert report.sharp is not None
        text = render_report(report)
        assert "sharp.origin_ceiling" in text
        assert "sharp_origin.verdict" in text

    def test_conservative_pass_case(self):
        setup = ExecutionSetup(quantity=10, horizon=1.0, kappa=0.01, delta_max=0.5, s0=1.0)
        model = IntensityModel(base_rate=0.5, decay=0.5)
        report = build_report(setup, model, IDENTITY)
        assert report.all_conservative_ok
