"""Free-field propagation, SNR mixing, noise fields, scenario files."""

import numpy as np
import pytest

from beamkin.audio import TimeSignal, stft
from beamkin.scene import (
    DIFFUSE_LEVEL,
    SPEED_OF_SOUND,
    PointSource,
    Scenario,
    azimuth_to_position,
    load_scenario,
    mix_at_snr,
    noise_gain,
    propagate,
    render_noise_field,
    save_scenario,
)
from beamkin.ssl import steering_table
from conftest import make_rng


def tone_source(position, f0=1000.0, duration=0.25, fs=16000, seed=0):
    rng = make_rng(seed)
    t = np.arange(int(duration * fs)) / fs
    x = np.sin(2 * np.pi * f0 * t) + 0.1 * rng.normal(size=t.shape)
    return PointSource(position=np.asarray(position, float),
                       signal=TimeSignal(samples=x, sample_rate=fs))


def test_azimuth_to_position_convention():
    assert np.allclose(azimuth_to_position(0.0, 2.0, 0.5), [2.0, 0.0, 0.5])
    assert np.allclose(azimuth_to_position(90.0, 2.0, 0.0), [0.0, 2.0, 0.0], atol=1e-12)
    assert np.allclose(azimuth_to_position(180.0, 1.0, 0.0), [-1.0, 0.0, 0.0], atol=1e-12)


def test_propagate_equidistant_mics_identical():
    src = tone_source([0.0, 0.0, 1.0])
    mics = np.array([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0], [0.0, 0.5, 0.0]])
    out = propagate(src, mics)
    assert np.max(np.abs(out.samples[0] - out.samples[1])) < 1e-9
    assert np.max(np.abs(out.samples[0] - out.samples[2])) < 1e-9


def test_propagate_16_sample_delay():
    # mics 0.343 m apart along the propagation axis: delay = 1 ms = 16
    # samples at 16 kHz, so the nearer channel leads by exactly 16 samples
    src = tone_source([-1.0, 0.0, 0.0], f0=500.0, duration=0.5)
    mics = np.array([[0.0, 0.0, 0.0], [SPEED_OF_SOUND / 1000.0, 0.0, 0.0]])
    out = propagate(src, mics)
    d0 = np.linalg.norm(mics[0] - src.position)
    d1 = np.linalg.norm(mics[1] - src.position)
    a = out.samples[0] * d0
    b = out.samples[1] * d1
    # undo 1/r, then channel 1 is channel 0 delayed by 16 samples
    assert np.max(np.abs(b[16:6000] - a[:5984])) < 1e-6 * np.max(np.abs(a))


def test_propagate_inverse_distance_law():
    src = tone_source([0.0, 0.0, 0.0], duration=0.3)
    mics = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    out = propagate(src, mics)
    r1 = np.sqrt(np.mean(out.samples[0, 2000:] ** 2))
    r2 = np.sqrt(np.mean(out.samples[1, 2000:] ** 2))
    assert r1 / r2 == pytest.approx(2.0, rel=1e-3)


def test_propagate_rejects_coincident_mic():
    src = tone_source([0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        propagate(src, np.array([[0.1, 0.2, 0.3]]))
    with pytest.raises(ValueError):
        propagate(src, np.zeros((2, 2)))


def test_plane_wave_limit_matches_steering_phase():
    # far source: per-bin inter-mic phase converges to the plane-wave
    # steering phase within 1 degree below 4 kHz
    aperture = 0.16
    mics = np.array([[0.08, 0.0, 0.0], [-0.08, 0.0, 0.0]])
    dist = 50 * aperture * 2
    theta = np.array([np.cos(0.3), np.sin(0.3), 0.0])
    rng = make_rng(4)
    sig = TimeSignal(samples=rng.normal(size=32000), sample_rate=16000)
    src = PointSource(position=dist * theta, signal=sig)
    out = propagate(src, mics)
    spec = stft(out)
    bins = np.arange(5, 128)  # ~150 Hz to 4 kHz
    cross = np.mean(spec.data[0, :, bins] * np.conj(spec.data[1, :, bins]), axis=1)
    measured = np.angle(cross)
    steer = steering_table(mics, theta[None, :], bins, 16000, 512)  # (F, 2, 1)
    expected = np.angle(steer[:, 0, 0] * np.conj(steer[:, 1, 0]))
    err = np.angle(np.exp(1j * (measured - expected)))
    assert np.max(np.abs(err)) < np.deg2rad(1.0)


def test_noise_gain_and_mix_examples():
    rng = make_rng(5)
    k, n = 4, 8000
    speech = TimeSignal(samples=rng.normal(size=(k, n)))
    # equal powers at 0 dB -> g = 1
    noise = TimeSignal(samples=speech.samples[:, ::-1].copy())
    assert noise_gain(speech, noise, 0.0) == pytest.approx(1.0, rel=1e-12)
    # equal powers at 10 dB -> g = 10^(-10/20)
    assert noise_gain(speech, noise, 10.0) == pytest.approx(10 ** (-0.5), rel=1e-12)

    noise2 = TimeSignal(samples=rng.normal(size=(k, n)))
    mixture, g = mix_at_snr(speech, noise2, 7.0)
    assert np.array_equal(mixture.samples, speech.samples + g * noise2.samples)
    ps = np.mean(speech.samples[:4] ** 2)
    pn = np.mean((g * noise2.samples[:4]) ** 2)
    assert 10 * np.log10(ps / pn) == pytest.approx(7.0, abs=0.01)


def test_same_gain_changes_realized_snr_elsewhere():
    rng = make_rng(6)
    speech = TimeSignal(samples=rng.normal(size=(6, 8000)))
    noise = TimeSignal(samples=2.0 * rng.normal(size=(6, 8000)))
    g = noise_gain(speech, noise, 0.0)
    # on the reference set the SNR is exact
    ps = np.mean(speech.samples[:4] ** 2)
    pn = np.mean((g * noise.samples[:4]) ** 2)
    assert 10 * np.log10(ps / pn) == pytest.approx(0.0, abs=0.01)
    # a different channel subset sees a different ratio
    ps2 = np.mean(speech.samples[4:] ** 2)
    pn2 = np.mean((g * noise.samples[4:]) ** 2)
    assert abs(10 * np.log10(ps2 / pn2)) > 0.01


def test_noise_gain_rejects_silence():
    live = TimeSignal(samples=np.ones((4, 100)))
    silent = TimeSignal(samples=np.zeros((4, 100)))
    with pytest.raises(ValueError):
        noise_gain(silent, live, 0.0)
    with pytest.raises(ValueError):
        noise_gain(live, silent, 0.0)


def test_mix_at_snr_shape_checks():
    a = TimeSignal(samples=np.ones((4, 100)))
    b = TimeSignal(samples=np.ones((4, 99)))
    with pytest.raises(ValueError):
        mix_at_snr(a, b, 0.0)
    c = TimeSignal(samples=np.ones((4, 100)), sample_rate=8000)
    with pytest.raises(ValueError):
        mix_at_snr(a, c, 0.0)


def test_render_noise_field_level_and_determinism():
    src = tone_source([1.0, 0.5, 0.2], duration=0.5, seed=8)
    mics = np.array([[0.1, 0.0, 0.0], [-0.1, 0.0, 0.0], [0.0, 0.1, 0.1]])
    a = render_noise_field(src, mics, make_rng(11))
    b = render_noise_field(src, mics, make_rng(11))
    assert np.array_equal(a.samples, b.samples)

    direct = propagate(src, mics)
    tail = a.samples - direct.samples
    tail_rms = np.sqrt(np.mean(tail**2, axis=1))
    direct_rms = np.sqrt(np.mean(direct.samples**2, axis=1))
    assert np.allclose(tail_rms / direct_rms, DIFFUSE_LEVEL, rtol=1e-6)
    # broadband tails decorrelate across channels (narrowband ones cannot:
    # same frequency, independent phase gives correlation cos(dphi))
    wide = PointSource(position=[1.0, 0.5, 0.2],
                       signal=TimeSignal(samples=make_rng(13).normal(size=8000)))
    wtail = render_noise_field(wide, mics, make_rng(14)).samples - propagate(
        wide, mics).samples
    c01 = abs(np.corrcoef(wtail[0], wtail[1])[0, 1])
    assert c01 < 0.2
    # zero diffuse level reduces to the direct path
    bare = render_noise_field(src, mics, make_rng(11), diffuse_level=0.0)
    assert np.array_equal(bare.samples, direct.samples)
    with pytest.raises(ValueError):
        render_noise_field(src, mics, make_rng(11), diffuse_level=-0.1)


def test_render_noise_field_full_rank_covariance():
    # the tail keeps the per-bin spatial covariance well conditioned, which
    # a single anechoic point source cannot do (rank one)
    src = tone_source([1.0, 0.0, 0.3], duration=0.5, seed=9)
    mics = np.array([[0.08, 0.08, 0], [0.08, -0.08, 0], [-0.08, -0.08, 0], [-0.08, 0.08, 0]])
    out = render_noise_field(src, mics, make_rng(12))
    spec = stft(out).data  # (K, T, F)
    f = 60
    y = spec[:, :, f]
    scm = (y @ y.conj().T) / y.shape[1]
    w = np.linalg.eigvalsh(scm)
    assert w[0] > 1e-4 * w[-1]


def test_scenario_validation_and_positions():
    s = Scenario(speech_doa=30.0, noise_doa=120.0)
    assert np.allclose(
        s.speech_position(),
        azimuth_to_position(30.0, s.source_distance, s.source_height),
    )
    with pytest.raises(ValueError):
        Scenario(speech_doa=370.0)
    with pytest.raises(ValueError):
        Scenario(speech_doa=10.0, duration=0.0)
    with pytest.raises(ValueError):
        Scenario(speech_doa=10.0, source_distance=-1.0)


def test_scenario_yaml_round_trip(tmp_path):
    s = Scenario(
        speech_doa=75.0, noise_doa=210.0, snr_db=-5.0, noise_kind="hum",
        array_config="static2", seed=42, duration=1.25, source_distance=2.0,
    )
    path = tmp_path / "scene.yaml"
    save_scenario(path, s)
    back = load_scenario(path)
    assert back == s


def test_scenario_nested_sections(tmp_path):
    path = tmp_path / "scene.yaml"
    path.write_text(
        "speech:\n  doa: 45\nnoise:\n  doa: 135\n  kind: pump\nsnr_db: 5\n"
    )
    s = load_scenario(path)
    assert s.speech_doa == 45.0 and s.noise_doa == 135.0
    assert s.noise_kind == "pump"


def test_scenario_rejects_unknown_keys(tmp_path):
    path = tmp_path / "scene.yaml"
    path.write_text("speech_doa: 10\nvolume: 11\n")
    with pytest.raises(ValueError):
        load_scenario(path)
