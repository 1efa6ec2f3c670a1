import numpy as np
import pytest

from sawmollow.model import DriveConfig, EmitterParams, Frequency


@pytest.fixture
def emitter():
    return EmitterParams.from_ghz(0.134)


@pytest.fixture
def drive_resonant():
    """Rabi resonance at zero detuning, the central-cancellation condition."""
    return DriveConfig.from_ghz(0.0, 3.5299, 1.75, 3.5299)


@pytest.fixture
def drive_unmodulated():
    return DriveConfig.from_ghz(0.0, 3.5299, 0.0, 3.5299)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def ghz(x):
    return Frequency.from_ghz(x)
