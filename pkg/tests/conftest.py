import numpy as np
import pytest

from centaursim.model import JointState, default_model, default_stand_positions


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture
def stand_state(model):
    return JointState(default_stand_positions(model))


def random_state_within_limits(model, rng, fraction=0.8):
    lo = np.where(np.isfinite(model.position_lower), model.position_lower, -np.pi)
    hi = np.where(np.isfinite(model.position_upper), model.position_upper, np.pi)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * fraction
    return JointState(rng.uniform(mid - half, mid + half))
