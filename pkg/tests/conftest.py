"""Shared fixtures and small builders used across the test modules."""

import numpy as np
import pytest

from beamkin.audio import TimeSignal
from beamkin.kinematics import KinematicChain


def make_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed))


def random_signal(seed, channels=2, n_samples=4096, sample_rate=16000):
    rng = make_rng(seed)
    return TimeSignal(
        samples=rng.normal(size=(channels, n_samples)), sample_rate=sample_rate
    )


def random_psd(rng, k, scale=1.0):
    """Random Hermitian PSD matrix A A^H + small ridge."""
    a = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    return scale * (a @ a.conj().T) + 1e-3 * np.eye(k)


@pytest.fixture(scope="session")
def chain():
    return KinematicChain.default()
