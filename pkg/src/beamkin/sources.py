"""Bundled test signals: a speech-shaped babble source and machine noises.

All generators are deterministic given an ``numpy.random.Generator`` and
return mono float64 arrays normalized to a common RMS so that mixing code
can rely on consistent levels.
"""

import numpy as np
from scipy import signal as sps

TARGET_RMS = 0.1

NOISE_KINDS = ("pump", "drill", "engine", "hum", "air", "rumble")


def _normalize_rms(x, rms=TARGET_RMS):
    power = np.sqrt(np.mean(x**2))
    if power <= 0:
        raise ValueError("generated signal has zero power")
    return x * (rms / power)


def _bandpass(x, lo, hi, fs, order=4):
    sos = sps.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return sps.sosfilt(sos, x)


def _lowpass(x, cut, fs, order=4):
    sos = sps.butter(order, cut, btype="lowpass", fs=fs, output="sos")
    return sps.sosfilt(sos, x)


def _highpass(x, cut, fs, order=4):
    sos = sps.butter(order, cut, btype="highpass", fs=fs, output="sos")
    return sps.sosfilt(sos, x)


# vowel-like formant presets cycled through during voiced stretches
_VOWELS = (
    ((300.0, 750.0), (1000.0, 1400.0), (2300.0, 2900.0)),
    ((550.0, 1000.0), (1300.0, 1900.0), (2400.0, 3100.0)),
    ((250.0, 500.0), (1700.0, 2400.0), (2700.0, 3400.0)),
    ((400.0, 850.0), (800.0, 1250.0), (2200.0, 2800.0)),
)


def speech_like(duration, sample_rate, rng):
    """Synthetic speech: a sweeping harmonic voice with moving formants,
    syllabic modulation, pauses, and fricative bursts.

    The voiced part is a glottal pulse train whose pitch jumps and glides
    over most of an octave, filtered through vowel-like formant presets
    that switch every syllable.  Energy therefore concentrates on harmonic
    tracks that keep moving across frequency bins, reproducing the
    time-frequency sparsity and nonstationarity of real speech that
    mask-based spatial statistics rely on.
    """
    n = int(round(duration * sample_rate))
    if n <= 0:
        raise ValueError(f"duration must be positive, got {duration}")

    # pitch contour: per-syllable jumps smoothed into glides, ± ~0.5 octave
    syllable = int(0.18 * sample_rate)
    n_syll = max(1, n // syllable + 1)
    steps = rng.uniform(-0.5, 0.5, size=n_syll)
    contour = np.repeat(steps, syllable)[:n]
    contour = _lowpass(contour, 6.0, sample_rate, order=2)
    f0 = 130.0 * 2.0**contour
    phase = np.cumsum(f0) / sample_rate
    pulses = np.zeros(n)
    pulses[np.flatnonzero(np.diff(np.floor(phase)) > 0)] = 1.0

    # glottal pulse shape: short exponential decay, ~-6 dB/oct spectrum
    kernel = np.exp(-np.arange(int(0.004 * sample_rate)) / (0.0012 * sample_rate))
    glottal = np.convolve(pulses, kernel)[:n]

    # vowel templates filtered once each, then crossfaded per syllable
    templates = []
    for bands in _VOWELS:
        y = sum(
            gain * _bandpass(glottal, lo, hi, sample_rate, order=2)
            for gain, (lo, hi) in zip((1.0, 0.5, 0.25), bands)
        )
        templates.append(y + 0.3 * _lowpass(glottal, 350.0, sample_rate, order=2))
    picks = rng.integers(0, len(_VOWELS), size=n_syll)
    voiced = np.zeros(n)
    weights = np.zeros((len(_VOWELS), n))
    sel = np.repeat(picks, syllable)[:n]
    for v in range(len(_VOWELS)):
        weights[v] = _lowpass((sel == v).astype(np.float64), 12.0, sample_rate, order=2)
    weights = np.clip(weights, 0.0, None)
    weights /= np.sum(weights, axis=0) + 1e-12
    for v, tpl in enumerate(templates):
        voiced += weights[v] * tpl

    # syllabic envelope: smoothed positive noise, sharpened troughs
    env = _lowpass(np.abs(rng.standard_normal(n)), 3.5, sample_rate, order=2)
    env = np.clip(env / (np.max(np.abs(env)) + 1e-12), 0.0, None) ** 1.3

    # word-scale pauses: ~30% of 150 ms blocks muted, smoothed edges
    block = int(0.15 * sample_rate)
    n_blocks = max(1, n // block + 1)
    gate = np.repeat((rng.random(n_blocks) > 0.3).astype(np.float64), block)[:n]
    gate = np.clip(_lowpass(gate, 10.0, sample_rate, order=2), 0.0, 1.0)

    # fricative bursts: brief high-band noise in ~12% of 60 ms slots
    slot = int(0.06 * sample_rate)
    n_slots = max(1, n // slot + 1)
    burst_gate = np.repeat((rng.random(n_slots) < 0.12).astype(np.float64), slot)[:n]
    burst_gate = np.clip(_lowpass(burst_gate, 25.0, sample_rate, order=2), 0.0, 1.0)
    frics = _bandpass(rng.standard_normal(n), 2500.0, 7000.0, sample_rate, order=2)

    x = voiced * env * gate + 0.15 * frics * burst_gate * gate
    return _normalize_rms(x)


def _pump(n, fs, rng):
    # slow piston thumps over a low rumble bed
    rate = 9.0
    t = np.arange(n) / fs
    phase = rate * t + 0.02 * np.cumsum(rng.standard_normal(n)) / fs
    impulses = np.zeros(n)
    ticks = np.flatnonzero(np.diff(np.floor(phase)) > 0)
    impulses[ticks] = 1.0
    thump = np.exp(-np.arange(int(0.03 * fs)) / (0.006 * fs))
    train = np.convolve(impulses, thump)[:n]
    bed = _lowpass(rng.standard_normal(n), 220.0, fs)
    return train * _lowpass(np.abs(rng.standard_normal(n)) + 0.5, 30.0, fs) + 0.4 * bed


def _drill(n, fs, rng):
    # strong harmonic stack around 220 Hz with jitter plus broadband grind
    t = np.arange(n) / fs
    f0 = 220.0 * (1.0 + 0.01 * _lowpass(rng.standard_normal(n), 6.0, fs))
    phase = 2.0 * np.pi * np.cumsum(f0) / fs
    tone = sum(np.sin(h * phase) / h for h in range(1, 13))
    grind = _bandpass(rng.standard_normal(n), 1000.0, 6500.0, fs)
    return tone + 0.35 * grind


def _engine(n, fs, rng):
    # low firing-order harmonics with slow RPM wobble and exhaust noise
    t = np.arange(n) / fs
    f0 = 45.0 * (1.0 + 0.05 * np.sin(2.0 * np.pi * 0.35 * t + rng.uniform(0, 2 * np.pi)))
    phase = 2.0 * np.pi * np.cumsum(f0) / fs
    tone = sum(np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h**0.7 for h in range(1, 9))
    exhaust = _lowpass(rng.standard_normal(n), 900.0, fs, order=2)
    return tone + 0.5 * exhaust


def _hum(n, fs, rng):
    # mains-style hum: 60 Hz odd harmonics plus a faint broadband floor
    t = np.arange(n) / fs
    tone = sum(
        np.sin(2.0 * np.pi * 60.0 * h * t + rng.uniform(0, 2 * np.pi)) / h
        for h in (1, 3, 5, 7, 9)
    )
    floor = _lowpass(rng.standard_normal(n), 2000.0, fs, order=2)
    return tone + 0.08 * floor


def _air(n, fs, rng):
    # ventilation hiss: high-passed noise with gentle flutter
    hiss = _highpass(rng.standard_normal(n), 800.0, fs, order=2)
    flutter = 1.0 + 0.25 * _lowpass(rng.standard_normal(n), 2.0, fs, order=2)
    return hiss * flutter


def _rumble(n, fs, rng):
    # structural rumble: integrated noise with sparse impacts
    brown = np.cumsum(rng.standard_normal(n))
    brown = _highpass(brown, 15.0, fs, order=2)
    brown /= np.max(np.abs(brown)) + 1e-12
    impacts = np.zeros(n)
    n_hits = max(1, int(n / fs * 3))
    pos = rng.integers(0, n, size=n_hits)
    impacts[pos] = rng.uniform(0.5, 1.0, size=n_hits)
    knock = np.exp(-np.arange(int(0.05 * fs)) / (0.01 * fs)) * np.sin(
        2.0 * np.pi * 90.0 * np.arange(int(0.05 * fs)) / fs
    )
    hits = np.convolve(impacts, knock)[:n]
    return brown + 0.8 * hits


_GENERATORS = {
    "pump": _pump,
    "drill": _drill,
    "engine": _engine,
    "hum": _hum,
    "air": _air,
    "rumble": _rumble,
}

# every real machine recording carries a broadband turbulent/electronic
# floor on top of its tonal signature; the bed level is relative to the
# texture RMS
BED_LEVEL = 0.3


def _broadband_bed(n, fs, rng):
    """Pink-ish full-band floor: tilted white noise."""
    white = rng.standard_normal(n)
    return _lowpass(white, 400.0, fs, order=1) + 0.25 * white


def machine_noise(kind, duration, sample_rate, rng):
    """Generate one of the bundled machine-noise textures.

    kind must be one of NOISE_KINDS; raises ValueError otherwise.  Each
    texture rides on a low-level broadband bed, as real machines do.
    """
    if kind not in _GENERATORS:
        raise ValueError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")
    n = int(round(duration * sample_rate))
    if n <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    body = _normalize_rms(_GENERATORS[kind](n, sample_rate, rng))
    bed = _normalize_rms(_broadband_bed(n, sample_rate, rng))
    return _normalize_rms(body + BED_LEVEL * bed)
