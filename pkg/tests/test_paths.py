import math

import numpy as np
import pytest

from limitpost.errors import DataLoadError, SourceExhaustedError
from limitpost.market import IntensityModel, path_intensity
from limitpost.paths import (
    BrownianSource,
    DiffusionSpec,
    EulerSource,
    PricePath,
    ReplaySource,
    RngStream,
    replay_source,
    simulate_brownian,
    simulate_euler,
    star_discrepancy,
)


class TestPricePath:
    def test_validation(self):
        with pytest.raises(ValueError):
            PricePath(times=np.array([0.0, 1.0]), values=np.array([1.0]))
        with pytest.raises(ValueError):
            PricePath(times=np.array([0.5, 1.0]), values=np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            PricePath(times=np.array([0.0, -1.0]), values=np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            PricePath(times=np.array([0.0, 1.0]), values=np.array([1.0, -2.0]))
        with pytest.raises(ValueError):
            PricePath(times=np.array([0.0, 1.0]), values=np.array([1.0, np.nan]))
        with pytest.raises(ValueError):
            PricePath(times=np.array([0.0, 1.0]), values=np.array([1.0, 2.0]), quadrature="mid")

    def test_zero_gap_ticks_allowed_with_positive_span(self):
        path = PricePath(
            times=np.array([0.0, 1.0, 1.0, 2.0]),
            values=np.array([10.0, 10.5, 10.25, 10.0]),
            quadrature="right",
        )
        assert path.horizon == 2.0

    def test_accessors(self):
        path = PricePath(times=np.array([0.0, 1.0, 2.0]), values=np.array([5.0, 6.0, 7.0]))
        assert path.initial == 5.0 and path.terminal == 7.0 and path.steps == 2


class TestRngStream:
    def test_reproducible_streams(self):
        a = RngStream(42, 7).generator().standard_normal(8)
        b = RngStream(42, 7).generator().standard_normal(8)
        c = RngStream(42, 8).generator().standard_normal(8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_substream(self):
        assert RngStream(1, 0).substream(5) == RngStream(1, 5)

    def test_key_range_validation(self):
        with pytest.raises(ValueError):
            RngStream(-1, 0)
        with pytest.raises(ValueError):
            RngStream(0, 2**64)


class TestBrownianSimulation:
    def test_zero_volatility_constant(self):
        path = simulate_brownian(100.0, 0.0, 5.0, 20, RngStream(3, 0))
        assert np.all(path.values == 100.0)

    def test_grid_and_increment_scale(self):
        path = simulate_brownian(100.0, 0.01, 5.0, 20, RngStream(3, 1))
        assert path.times[1] - path.times[0] == pytest.approx(0.25)
        shocks = RngStream(3, 1).generator().standard_normal(20)
        # per-step std is sigma sqrt(T/m) = 0.005
        assert np.allclose(np.diff(path.values), 0.005 * shocks)

    def test_terminal_moments_match_gaussian_law(self):
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=23)
        terminal = source.values_block(100_000)[:, -1]
        mean_se = terminal.std(ddof=1) / math.sqrt(100_000)
        assert abs(terminal.mean() - 100.0) <= 4.0 * mean_se
        variance = terminal.var(ddof=1)
        var_se = variance * math.sqrt(2.0 / (100_000 - 1))
        assert abs(variance - 5e-4) <= 3.0 * var_se

    def test_increment_moments_match_gaussian_law(self):
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=29)
        increments = np.diff(source.values_block(5000), axis=1).ravel()
        n = increments.size  # 100k increments of std 0.005
        mean_se = increments.std(ddof=1) / math.sqrt(n)
        assert abs(increments.mean()) <= 4.0 * mean_se
        variance = increments.var(ddof=1)
        var_se = variance * math.sqrt(2.0 / (n - 1))
        assert abs(variance - 0.005**2) <= 4.0 * var_se

    def test_step_validation(self):
        with pytest.raises(ValueError):
            simulate_brownian(100.0, 0.01, 5.0, 0, RngStream(1, 0))
        with pytest.raises(ValueError):
            simulate_brownian(100.0, -0.01, 5.0, 5, RngStream(1, 0))


class TestEulerScheme:
    def test_reduces_to_brownian(self):
        spec = DiffusionSpec(drift=lambda t, x: 0.0 * x, vol=lambda t, x: 0.01 + 0.0 * x)
        rng = RngStream(11, 4)
        euler = simulate_euler(spec, 100.0, 5.0, 20, rng)
        brownian = simulate_brownian(100.0, 0.01, 5.0, 20, rng)
        assert np.array_equal(euler.values, brownian.values)

    def test_deterministic_drift_step(self):
        spec = DiffusionSpec(drift=lambda t, x: 1.0 + 0.0 * x, vol=lambda t, x: 0.0 * x + 1e-12)
        path = simulate_euler(spec, 100.0, 3.0, 1, RngStream(1, 0))
        assert path.terminal == pytest.approx(103.0, abs=1e-9)

    def test_martingale_property_driftless_geometric(self):
        spec = DiffusionSpec(
            drift=lambda t, x: 0.0 * x,
            vol=lambda t, x: 0.2 * x,
            state_interval=(0.0, math.inf),
        )
        source = EulerSource(spec, 100.0, 5.0, 20, seed=17)
        terminal = source.values_block(100_000)[:, -1]
        se = terminal.std(ddof=1) / math.sqrt(100_000)
        assert abs(terminal.mean() - 100.0) <= 3.0 * se

    def test_exit_flag(self):
        spec = DiffusionSpec(
            drift=lambda t, x: -100.0 + 0.0 * x,
            vol=lambda t, x: 1e-9 + 0.0 * x,
            state_interval=(50.0, math.inf),
        )
        path = simulate_euler(spec, 100.0, 1.0, 4, RngStream(2, 0))
        assert path.exited_state_interval

    def test_block_matches_per_path(self):
        spec = DiffusionSpec(
            drift=lambda t, x: 0.02 * x,
            vol=lambda t, x: 0.15 * x,
            state_interval=(0.0, math.inf),
        )
        source = EulerSource(spec, 100.0, 5.0, 20, seed=5)
        block = source.values_block(40)
        for index in (0, 13, 39):
            assert np.array_equal(source.path(index).values, block[index])
        for index, path in enumerate(source.iter_paths(12)):
            assert np.array_equal(path.values, block[index])


class TestBrownianSource:
    def test_block_matches_per_path(self):
        source = BrownianSource(100.0, 0.01, 5.0, 20, seed=99)
        block = source.values_block(101)
        for index in (0, 1, 7, 100):
            assert np.array_equal(source.path(index).values, block[index])

    def test_iter_matches_block(self):
        source = BrownianSource(100.0, 0.02, 5.0, 10, seed=4)
        block = source.values_block(9000)
        for index, path in enumerate(source.iter_paths(9000)):
            if index % 1717 == 0:
                assert np.array_equal(path.values, block[index])

    def test_first_stream_offset(self):
        base = BrownianSource(100.0, 0.01, 5.0, 20, seed=1, first_stream=0)
        shifted = BrownianSource(100.0, 0.01, 5.0, 20, seed=1, first_stream=10)
        assert np.array_equal(base.path(10).values, shifted.path(0).values)


class TestReplaySource:
    class Series:
        def __init__(self, timestamps, bids):
            self.timestamps = np.asarray(timestamps, dtype=float)
            self.bids = np.asarray(bids, dtype=float)

    def test_sliding_window(self):
        series = self.Series([0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
        windows = replay_source(series, cycle_length=2, shift=1)
        assert [list(w.values) for w in windows] == [[1.0, 2.0], [2.0, 3.0], [3.0, 4.0]]
        assert all(w.times[0] == 0.0 for w in windows)
        assert all(w.quadrature == "right" for w in windows)

    def test_disjoint_default_drops_tail(self):
        series = self.Series(np.arange(7.0), np.full(7, 3.0))
        windows = replay_source(series, cycle_length=3)
        assert len(windows) == 2

    def test_constant_series_identical_intensity(self):
        series = self.Series(np.arange(30.0), np.full(30, 42.0))
        windows = replay_source(series, cycle_length=15)
        model = IntensityModel(0.02, 50.0)
        values = {path_intensity(model, 0.01, w).value for w in windows}
        assert len(windows) == 2
        assert max(values) - min(values) < 1e-15

    def test_too_short_series(self):
        series = self.Series([0.0, 1.0], [1.0, 1.0])
        with pytest.raises(DataLoadError):
            replay_source(series, cycle_length=5)

    def test_exhaustion(self):
        series = self.Series(np.arange(30.0), np.full(30, 3.0))
        source = ReplaySource(replay_source(series, cycle_length=15))
        with pytest.raises(SourceExhaustedError):
            list(source.iter_paths(3))
        assert len(list(source.iter_paths(2))) == 2


class TestStarDiscrepancy:
    def test_single_midpoint(self):
        result = star_discrepancy(np.array([[0.5]]), upper=1.0)
        assert result.is_exact
        assert result.value == pytest.approx(0.5, abs=1e-14)

    def test_midpoint_lattice(self):
        for n in (4, 9, 25):
            points = ((2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n))[:, None]
            result = star_discrepancy(points, upper=1.0)
            assert result.value == pytest.approx(1.0 / (2.0 * n), abs=1e-14)

    def test_self_reference_is_zero(self):
        gen = RngStream(8, 0).generator()
        points = gen.random((40, 2))
        result = star_discrepancy(points, reference=points, upper=1.0)
        assert result.value == 0.0

    def test_dimension_two_sandwich_oracle(self):
        # exact scan must dominate a dense-corner probe and stay within the
        # probe plus the uniform measure's modulus over one probe cell
        gen = RngStream(9, 0).generator()
        points = gen.random((30, 2))
        exact = star_discrepancy(points, upper=1.0).value
        axis = np.linspace(0.0, 1.0, 201)
        mesh = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        inside = (points[None, :, 0] <= mesh[:, None, 0]) & (
            points[None, :, 1] <= mesh[:, None, 1]
        )
        probe = np.max(np.abs(inside.mean(axis=1) - mesh[:, 0] * mesh[:, 1]))
        assert exact >= probe - 1e-12
        assert exact <= probe + 2.0 / 200.0

    def test_permutation_invariance_in_two_dimensions(self):
        gen = RngStream(10, 0).generator()
        points = gen.random((25, 2))
        direct = star_discrepancy(points, upper=1.0).value
        swapped = star_discrepancy(points[:, ::-1], upper=1.0).value
        assert direct == pytest.approx(swapped, abs=1e-14)

    def test_high_dimension_is_labelled_lower_bound(self):
        gen = RngStream(11, 0).generator()
        points = gen.random((50, 4))
        result = star_discrepancy(points, upper=1.0, corner_samples=2000, seed=1)
        assert not result.is_exact
        assert 0.0 < result.value <= 1.0

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            star_discrepancy(np.array([[1.5]]), upper=1.0)
        with pytest.raises(ValueError):
            star_discrepancy(np.array([[0.5]]))
