import numpy as np
import pytest

from limitpost.market import ExecutionSetup, IntensityModel, PenaltySpec
from limitpost.paths import BrownianSource


@pytest.fixture(scope="session")
def sim_model() -> IntensityModel:
    return IntensityModel(base_rate=5.0, decay=1.0)


@pytest.fixture(scope="session")
def sim_penalty() -> PenaltySpec:
    return PenaltySpec.exponential_impact(1.0, 0.01)


@pytest.fixture(scope="session")
def setting1(sim_model, sim_penalty):
    """First simulated reference setting: exponential impact, kappa = 6."""
    setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=6.0, delta_max=3.0, s0=100.0)
    return setup, sim_model, sim_penalty


@pytest.fixture(scope="session")
def setting2(sim_model):
    """Second simulated reference setting: identity penalty, kappa = 12."""
    setup = ExecutionSetup(quantity=10, horizon=5.0, kappa=12.0, delta_max=3.0, s0=100.0)
    return setup, sim_model, PenaltySpec.identity()


@pytest.fixture(scope="session")
def brownian_source():
    def make(seed: int = 20260810, sigma: float = 0.01, first_stream: int = 0) -> BrownianSource:
        return BrownianSource(
            s0=100.0, sigma=sigma, horizon=5.0, steps=20, seed=seed, first_stream=first_stream
        )

    return make


@pytest.fixture(scope="session")
def batch_1000(sim_model, brownian_source):
    from limitpost.cost import PathBatch

    return PathBatch.from_source(sim_model, brownian_source(seed=31), 1000)


def assert_rel_close(actual, expected, tol, context=""):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = np.maximum(np.abs(expected), 1.0)
    gap = np.max(np.abs(actual - expected) / scale)
    assert gap <= tol, f"{context}: relative gap {gap:.3e} > {tol:.1e}"
