"""Bundled signal generators: speech-shaped bursts and machine noises."""

import numpy as np
import pytest

from beamkin.sources import NOISE_KINDS, TARGET_RMS, machine_noise, speech_like
from conftest import make_rng


def test_noise_kinds_cover_six_textures():
    assert len(NOISE_KINDS) == 6
    assert len(set(NOISE_KINDS)) == 6


@pytest.mark.parametrize("kind", NOISE_KINDS)
def test_machine_noise_shape_rms_determinism(kind):
    x1 = machine_noise(kind, 0.5, 16000, make_rng(7))
    x2 = machine_noise(kind, 0.5, 16000, make_rng(7))
    assert x1.shape == (8000,)
    assert np.array_equal(x1, x2)
    assert np.sqrt(np.mean(x1**2)) == pytest.approx(TARGET_RMS, rel=1e-9)
    assert np.all(np.isfinite(x1))


def test_machine_noise_kinds_differ():
    sigs = [machine_noise(kind, 0.25, 16000, make_rng(0)) for kind in NOISE_KINDS]
    for i in range(len(sigs)):
        for j in range(i + 1, len(sigs)):
            # same rng stream, different spectral recipes
            assert not np.allclose(sigs[i], sigs[j])


def test_machine_noise_unknown_kind():
    with pytest.raises(ValueError):
        machine_noise("vuvuzela", 0.5, 16000, make_rng(0))


def test_speech_like_rms_and_determinism():
    x1 = speech_like(1.0, 16000, make_rng(3))
    x2 = speech_like(1.0, 16000, make_rng(3))
    assert x1.shape == (16000,)
    assert np.array_equal(x1, x2)
    assert np.sqrt(np.mean(x1**2)) == pytest.approx(TARGET_RMS, rel=1e-9)


def test_speech_like_is_nonstationary():
    # speech has bursts and pauses; frame energies must spread far more
    # than any of the stationary machine textures
    def frame_energy_spread(x):
        frames = x[: len(x) // 400 * 400].reshape(-1, 400)
        e = np.sqrt(np.mean(frames**2, axis=1))
        return np.std(e) / np.mean(e)

    speech_spread = frame_energy_spread(speech_like(2.0, 16000, make_rng(5)))
    hum_spread = frame_energy_spread(machine_noise("hum", 2.0, 16000, make_rng(5)))
    assert speech_spread > 2 * hum_spread


def test_seeds_decorrelate():
    a = speech_like(0.5, 16000, make_rng(1))
    b = speech_like(0.5, 16000, make_rng(2))
    corr = abs(np.corrcoef(a, b)[0, 1])
    assert corr < 0.2
