"""Free-field scene simulation: point sources, propagation, SNR mixing.

Sources are ideal monopoles in anechoic space.  Propagation to each
microphone applies the exact fractional delay r/c as a linear phase in the
frequency domain and a 1/r amplitude taper; there are no reflections.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .audio import DEFAULT_SAMPLE_RATE, TimeSignal

SPEED_OF_SOUND = 343.0

# channels used to normalize mixture SNR: the four base-plate mics, whose
# positions never depend on the arm pose, so one gain serves all geometries
GAIN_REFERENCE_CHANNELS = (0, 1, 2, 3)


@dataclass
class PointSource:
    """A mono signal emitted from a fixed position in meters."""

    position: np.ndarray
    signal: TimeSignal
    kind: str = "speech"

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(-1)
        if pos.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got shape {pos.shape}")
        if self.signal.n_channels != 1:
            raise ValueError("source signal must be mono")
        self.position = pos


def azimuth_to_position(azimuth_deg: float, distance: float, height: float) -> np.ndarray:
    """Place a source on a horizontal ring around the array base.

    Azimuth 0 is +x, angles increase counterclockwise toward +y.
    """
    a = np.deg2rad(azimuth_deg)
    return np.array(
        [distance * np.cos(a), distance * np.sin(a), height], dtype=np.float64
    )


def propagate(source: PointSource, mic_positions: np.ndarray) -> TimeSignal:
    """Render the source at each microphone with exact fractional delays.

    The source signal is zero-padded, transformed once, and each channel is
    synthesized as X(f) * exp(-2j*pi*f*r_k/c) / r_k.  Output length equals
    the input length; energy arriving past the end is discarded.  Raises
    ValueError if any microphone coincides with the source.
    """
    mics = np.asarray(mic_positions, dtype=np.float64)
    if mics.ndim != 2 or mics.shape[1] != 3:
        raise ValueError(f"mic_positions must be (K, 3), got shape {mics.shape}")
    dist = np.linalg.norm(mics - source.position[None, :], axis=1)
    if np.any(dist < 1e-6):
        raise ValueError("microphone coincides with the source position")

    x = source.signal.channel(0)
    fs = source.signal.sample_rate
    n = x.shape[0]
    max_delay = int(np.ceil(np.max(dist) / SPEED_OF_SOUND * fs)) + 1
    n_pad = int(2 ** np.ceil(np.log2(n + max_delay)))

    spectrum = np.fft.rfft(x, n=n_pad)
    freqs = np.fft.rfftfreq(n_pad, d=1.0 / fs)
    tau = dist / SPEED_OF_SOUND
    shifted = spectrum[None, :] * np.exp(-2j * np.pi * freqs[None, :] * tau[:, None])
    shifted /= dist[:, None]
    out = np.fft.irfft(shifted, n=n_pad, axis=-1)[:, :n]
    return TimeSignal(samples=out, sample_rate=fs)


# diffuse tail level of rendered noise fields, relative to the direct-path
# image RMS per channel (about -9 dB, a weak late field for a source at
# arm's length in an ordinary room); see render_noise_field
DIFFUSE_LEVEL = 0.35


def render_noise_field(source: PointSource, mic_positions: np.ndarray,
                       rng: np.random.Generator,
                       diffuse_level: float = DIFFUSE_LEVEL) -> TimeSignal:
    """Render a noise source as a direct path plus a diffuse tail.

    Room noise is never a pure point source: reflections arrive from all
    directions and decorrelate across microphones.  The tail is modeled as
    an independent random-phase surrogate of the source signal per channel
    (same magnitude spectrum, uncorrelated samples), scaled relative to
    each channel's direct-path RMS.  Besides realism this keeps the noise
    spatial covariance full rank, which whitening-based localization and
    beamforming rely on.
    """
    direct = propagate(source, mic_positions)
    if diffuse_level == 0.0:
        return direct
    if diffuse_level < 0:
        raise ValueError(f"diffuse_level must be nonnegative, got {diffuse_level}")
    x = source.signal.channel(0)
    spectrum = np.fft.rfft(x)
    mag = np.abs(spectrum)
    n = x.shape[0]
    k = direct.n_channels
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(k, mag.shape[0]))
    surrogate = mag[None, :] * np.exp(1j * phases)
    surrogate[:, 0] = mag[0]  # keep DC and Nyquist real
    if n % 2 == 0:
        surrogate[:, -1] = mag[-1] * np.sign(np.cos(phases[:, -1]))
    tail = np.fft.irfft(surrogate, n=n, axis=-1)
    tail_rms = np.sqrt(np.mean(tail**2, axis=1, keepdims=True))
    direct_rms = np.sqrt(np.mean(direct.samples**2, axis=1, keepdims=True))
    tail *= np.where(tail_rms > 0, diffuse_level * direct_rms / tail_rms, 0.0)
    return TimeSignal(samples=direct.samples + tail, sample_rate=direct.sample_rate)


def noise_gain(
    speech: TimeSignal,
    noise: TimeSignal,
    snr_db: float,
    reference_channels=GAIN_REFERENCE_CHANNELS,
) -> float:
    """Scalar gain g so that speech vs g*noise hits snr_db on the reference set.

    Powers are averaged over the given channels of each multichannel image.
    Raises ValueError if either image has zero power there.
    """
    ref = list(reference_channels)
    ps = float(np.mean(speech.samples[ref] ** 2))
    pn = float(np.mean(noise.samples[ref] ** 2))
    if ps <= 0 or pn <= 0:
        raise ValueError("speech and noise images must both have power on the reference channels")
    return float(np.sqrt(ps / pn * 10.0 ** (-snr_db / 10.0)))


def mix_at_snr(
    speech: TimeSignal,
    noise: TimeSignal,
    snr_db: float,
    reference_channels=GAIN_REFERENCE_CHANNELS,
) -> tuple[TimeSignal, float]:
    """Mix speech + g*noise at the requested SNR; returns (mixture, g)."""
    if speech.samples.shape != noise.samples.shape:
        raise ValueError("speech and noise images must have matching shapes")
    if speech.sample_rate != noise.sample_rate:
        raise ValueError("speech and noise images must share a sample rate")
    g = noise_gain(speech, noise, snr_db, reference_channels)
    mixture = TimeSignal(
        samples=speech.samples + g * noise.samples, sample_rate=speech.sample_rate
    )
    return mixture, g


@dataclass
class Scenario:
    """One simulated scene: who speaks from where, against which noise.

    Azimuths are in degrees on [0, 360); distances and heights in meters.
    `array_config` names the array pose protocol ('optimized', 'static1',
    'static2', 'static3', or 'static4').  `noise_kind` is one of the bundled
    generators or 'none' for a noiseless scene.  All randomness (sources,
    target observation noise) derives from `seed`.
    """

    speech_doa: float
    noise_doa: float = 90.0
    snr_db: float = 5.0
    noise_kind: str = "drill"
    array_config: str = "optimized"
    seed: int = 0
    duration: float = 2.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    source_distance: float = 1.5
    # default source height matches the scan subset's mean microphone
    # height at the scan pose, so the horizontal search ring passes
    # through the true direction
    source_height: float = 0.22
    speech_wav: str | None = None
    noise_wav: str | None = None
    target_noise_std: float = 0.02
    standoff: float = 0.3
    ssl_grid_res: float = 1.0

    def __post_init__(self):
        for name in ("speech_doa", "noise_doa"):
            v = float(getattr(self, name))
            if not (0.0 <= v < 360.0):
                raise ValueError(f"{name} must lie in [0, 360), got {v}")
            setattr(self, name, v)
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.source_distance <= 0:
            raise ValueError(f"source_distance must be positive, got {self.source_distance}")

    def speech_position(self) -> np.ndarray:
        return azimuth_to_position(self.speech_doa, self.source_distance, self.source_height)

    def noise_position(self) -> np.ndarray:
        return azimuth_to_position(self.noise_doa, self.source_distance, self.source_height)

    @classmethod
    def from_mapping(cls, raw: dict) -> "Scenario":
        """Build a Scenario from a parsed config mapping.

        Accepts flat keys matching the field names plus optional nested
        `speech:` and `noise:` sections carrying doa/kind/wav entries.
        """
        data = dict(raw)
        speech = data.pop("speech", {}) or {}
        noise = data.pop("noise", {}) or {}
        if "doa" in speech:
            data["speech_doa"] = speech["doa"]
        if "wav" in speech:
            data["speech_wav"] = speech["wav"]
        if "doa" in noise:
            data["noise_doa"] = noise["doa"]
        if "kind" in noise:
            data["noise_kind"] = noise["kind"]
        if "wav" in noise:
            data["noise_wav"] = noise["wav"]
        valid = set(cls.__dataclass_fields__)
        unknown = set(data) - valid
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)


def load_scenario(path) -> Scenario:
    """Load a scenario description from a YAML file."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"scenario file {path} must contain a mapping")
    return Scenario.from_mapping(raw)


def save_scenario(path, scenario: Scenario) -> None:
    """Write a scenario back out as YAML."""
    fields = {
        k: getattr(scenario, k)
        for k in scenario.__dataclass_fields__
        if getattr(scenario, k) is not None
    }
    with open(path, "w") as fh:
        yaml.safe_dump(fields, fh, sort_keys=False)
