import numpy as np
import pytest

from regret_tune import TransferFunction, closed_loop
from regret_tune.experiments import builtin_config


@pytest.fixture(scope="session")
def lowpass_plant():
    """Second-order unit-DC-gain low-pass plant from the gain study."""
    return TransferFunction([0.02008, 0.04016, 0.02008], [1.0, -1.561, 0.6414])


@pytest.fixture(scope="session")
def lowpass_reference(lowpass_plant):
    return closed_loop(lowpass_plant, TransferFunction([0.5]))


@pytest.fixture(scope="session")
def gain_config():
    return builtin_config("1d")


@pytest.fixture(scope="session")
def highdim_config():
    return builtin_config("highdim")


@pytest.fixture(scope="session")
def matching_rho():
    return np.array([0.20, -0.27, 0.29, -0.24, 0.16, 0.0084])
