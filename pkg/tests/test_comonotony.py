import math

import numpy as np
import pytest

from limitpost import comonotony as cm
from limitpost.cost import PathBatch
from limitpost.market import ExecutionSetup, IntensityModel, PenaltySpec
from limitpost.paths import BrownianSource, PricePath, ReplaySource


@pytest.fixture(scope="module")
def brownian_paths():
    source = BrownianSource(100.0, 0.01, 5.0, 20, seed=99)
    return ReplaySource(list(source.iter_paths(20_000)))


class TestMonotoneFunctionals:
    def test_declaration_audits_pass(self, brownian_paths):
        model = IntensityModel(5.0, 1.0)
        functionals = [
            cm.terminal_value(),
            cm.running_max(),
            cm.running_min(),
            cm.path_mean(),
            cm.intensity_functional(model, reference=100.0),
        ]
        for functional in functionals:
            assert cm.audit_monotone_declaration(functional, brownian_paths), functional.name

    def test_wrong_declaration_fails_audit(self, brownian_paths):
        wrong = cm.MonotoneFunctional(lambda p: p.terminal, "non-increasing", 1.0, "bogus")
        assert not cm.audit_monotone_declaration(wrong, brownian_paths)

    def test_negation_flips_monotony(self):
        flipped = cm.negated(cm.terminal_value())
        assert flipped.declared_monotony == "non-increasing"
        path = PricePath(times=np.array([0.0, 1.0]), values=np.array([2.0, 3.0]))
        assert flipped(path) == -3.0

    def test_declaration_validation(self):
        with pytest.raises(ValueError):
            cm.MonotoneFunctional(lambda p: 0.0, "sideways")


class TestCovariance:
    def test_terminal_autocovariance_matches_gaussian_law(self, brownian_paths):
        estimate = cm.estimate_covariance(
            cm.terminal_value(), cm.terminal_value(), brownian_paths, 20_000
        )
        assert abs(estimate.covariance - 5e-4) <= 3.0 * estimate.standard_error
        assert estimate.covariance > 3.0 * estimate.standard_error

    def test_opposite_monotony_reverses_sign(self, brownian_paths):
        estimate = cm.estimate_covariance(
            cm.terminal_value(), cm.negated(cm.terminal_value()), brownian_paths, 20_000
        )
        assert abs(estimate.covariance + 5e-4) <= 3.0 * estimate.standard_error
        assert estimate.covariance < -3.0 * estimate.standard_error

    def test_max_and_mean_positively_related(self, brownian_paths):
        estimate = cm.estimate_covariance(
            cm.running_max(), cm.path_mean(), brownian_paths, 20_000
        )
        assert estimate.covariance > 3.0 * estimate.standard_error

    def test_intensity_against_terminal_is_negative(self, brownian_paths):
        # the engine behind the premium ceilings: larger prices, slower fills
        model = IntensityModel(5.0, 1.0)
        estimate = cm.estimate_covariance(
            cm.intensity_functional(model, reference=100.0),
            cm.terminal_value(),
            brownian_paths,
            20_000,
        )
        assert estimate.covariance < -3.0 * estimate.standard_error

    def test_jackknife_se_matches_naive(self):
        source = ReplaySource(
            list(BrownianSource(100.0, 0.01, 5.0, 10, seed=3).iter_paths(150))
        )
        estimate = cm.estimate_covariance(
            cm.terminal_value(), cm.path_mean(), source, 150
        )
        fx = np.array([p.terminal for p in source.cycles])
        gx = np.array([float(np.mean(p.values)) for p in source.cycles])
        n = 150
        loo = []
        for i in range(n):
            keep = np.arange(n) != i
            loo.append(np.cov(fx[keep], gx[keep], ddof=1)[0, 1])
        loo = np.asarray(loo)
        naive_se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
        assert estimate.standard_error == pytest.approx(naive_se, rel=1e-10)
        assert estimate.covariance == pytest.approx(np.cov(fx, gx, ddof=1)[0, 1], rel=1e-12)

    def test_sample_floor(self, brownian_paths):
        with pytest.raises(ValueError):
            cm.estimate_covariance(cm.terminal_value(), cm.path_mean(), brownian_paths, 10)


class TestPathwiseMonotony:
    def test_compliant_premium_monotone_everywhere(self):
        model = IntensityModel(0.2, 0.5)
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=11)
        batch = PathBatch.from_source(model, source, 500)
        grid = np.linspace(0.0, 1.0, 50)
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=0.2, delta_max=1.0, s0=100.0)
        penalty = PenaltySpec.exponential_impact(1.0, 0.01)
        report = cm.check_pathwise_gradient_monotone(setup, model, penalty, grid, batch)
        assert report.pass_rate == 1.0

    def test_violating_premium_detected(self):
        model = IntensityModel(0.2, 0.5)
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=11)
        batch = PathBatch.from_source(model, source, 500)
        grid = np.linspace(0.0, 1.0, 50)
        setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=50.0, delta_max=1.0, s0=100.0)
        report = cm.check_pathwise_gradient_monotone(
            setup, model, PenaltySpec.identity(), grid, batch
        )
        assert report.pass_rate < 1.0

    def test_constant_path_sign_analysis(self):
        # identity penalty on a constant path: monotone exactly when the
        # premium-weighted terminal exceeds the distance-adjusted start
        model = IntensityModel(0.2, 0.5)
        path = PricePath(times=np.linspace(0.0, 5.0, 21), values=np.full(21, 100.0))
        batch = PathBatch.from_paths(model, [path])
        grid = np.linspace(0.0, 1.0, 50)
        for kappa in (0.2, 0.9):
            setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=kappa, delta_max=1.0, s0=100.0)
            report = cm.check_pathwise_gradient_monotone(
                setup, model, PenaltySpec.identity(), grid, batch
            )
            # 1 + k (s0 - delta - kappa s0) >= 0 over the whole grid?
            front = 1.0 + model.decay * (100.0 - grid - kappa * 100.0)
            assert report.verdicts[0] == bool(np.all(front >= 0.0))


class TestLamperti:
    def test_black_scholes_drift_constant(self):
        spec = cm.black_scholes(0.05, 0.2)
        expected = 0.05 / 0.2 - 0.2 / 2.0
        for y in (-2.0, -0.3, 0.0, 0.7, 3.1):
            assert cm.lamperti_beta(spec, 100.0, y) == pytest.approx(expected, abs=1e-12)

    def test_bachelier_drift_ratio(self):
        spec = cm.bachelier(0.5, 2.0)
        for y in (-1.0, 0.0, 2.5):
            assert cm.lamperti_beta(spec, 10.0, y) == pytest.approx(0.25, abs=1e-12)

    def test_cev_closed_form(self):
        r, theta, alpha, x1 = 0.03, 0.4, 0.5, 2.0
        spec = cm.cev(r, theta, alpha)

        def expected(y):
            core = theta * (1.0 - alpha) * y + x1 ** (1.0 - alpha)
            return (r / theta) * core - (alpha * theta / 2.0) / core

        for y in (-1.0, 0.0, 1.5, 4.0):
            assert cm.lamperti_beta(spec, x1, y) == pytest.approx(expected(y), abs=1e-8)

    def test_round_trip(self):
        for spec in (cm.black_scholes(0.05, 0.2), cm.bounded_local_vol(0.05, 0.25, 0.1, 50.0)):
            for x in (20.0, 80.0, 150.0, 400.0):
                y = cm.lamperti_map(spec, 100.0, x)
                back = cm.lamperti_inverse(spec, 100.0, y)
                assert back == pytest.approx(x, abs=1e-10 * max(1.0, x))

    def test_map_domain(self):
        spec = cm.black_scholes(0.05, 0.2)
        with pytest.raises(ValueError):
            cm.lamperti_map(spec, 100.0, -5.0)


class TestAdmissibility:
    def test_black_scholes_admissible(self):
        spec = cm.black_scholes(0.05, 0.2)
        report = cm.admissibility_report(spec, [0.0], np.linspace(10.0, 300.0, 25))
        assert report.admissible
        assert report.endpoint_divergence == (True, True)
        assert abs(report.slope_min) < 1e-8 and abs(report.slope_max) < 1e-8

    def test_bachelier_admissible(self):
        spec = cm.bachelier(0.5, 2.0)
        report = cm.admissibility_report(spec, [0.0], np.linspace(-50.0, 50.0, 21))
        assert report.admissible
        assert report.endpoint_divergence == (True, True)

    def test_cev_lower_endpoint_fails(self):
        spec = cm.cev(0.03, 0.4, 0.5)
        report = cm.admissibility_report(spec, [0.0], np.linspace(0.5, 20.0, 25))
        assert not report.endpoint_divergence[0]
        assert report.endpoint_divergence[1]
        assert not report.admissible
        assert "heuristic" in report.heuristic

    def test_bounded_local_vol_admissible(self):
        spec = cm.bounded_local_vol(0.05, 0.25, 0.1, 50.0)
        report = cm.admissibility_report(spec, [0.0], np.linspace(20.0, 300.0, 20))
        assert report.admissible
        assert report.bounded


class TestMinEulerSteps:
    def test_nondecreasing_drift_needs_one_step(self):
        spec = cm.black_scholes(0.05, 0.2)
        grid = np.linspace(-1.0, 1.0, 9)
        assert cm.min_euler_steps(spec, 5.0, [0.0], grid, x1=100.0) == 1

    def test_linear_contraction_rate(self):
        spec = cm.bachelier(0.0, 1.0)  # spec unused when beta is supplied
        grid = np.linspace(-2.0, 2.0, 41)
        assert cm.min_euler_steps(spec, 10.0, [0.0], grid, beta=lambda t, y: -0.7 * y) == 7
        assert cm.min_euler_steps(spec, 10.0, [0.0], grid, beta=lambda t, y: -0.35 * y) == 4
        assert cm.min_euler_steps(spec, 10.0, [0.0], grid, beta=lambda t, y: 1.3) == 1
