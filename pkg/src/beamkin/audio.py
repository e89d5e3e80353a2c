"""Time-domain containers, STFT analysis/synthesis, and WAV file I/O.

Conventions used throughout the package:
  * time signals are float64 arrays of shape (channels, samples)
  * spectrograms are complex128 arrays of shape (channels, frames, bins)
  * analysis and synthesis both use a square-root Hann window, so the
    product window seen by the overlap-add stage is a full Hann window
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_N_FFT = 512
DEFAULT_HOP = 256

# overlap-add normalizer below this value counts as uncovered output
_OLA_EPS = 1e-8


@dataclass
class TimeSignal:
    """Multichannel time-domain signal.

    samples: (channels, samples) float64; a 1-D array is promoted to one
    channel.  sample_rate is in Hz.
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got ndim={samples.ndim}")
        if samples.shape[1] == 0:
            raise ValueError("signal has zero samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = samples

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, k: int) -> np.ndarray:
        return self.samples[k]


@dataclass
class MultichannelSpectrogram:
    """STFT tensor of shape (channels, frames, bins) with its frame grid."""

    data: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    n_fft: int = DEFAULT_N_FFT
    hop: int = DEFAULT_HOP

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 3:
            raise ValueError(f"data must be (channels, frames, bins), got ndim={data.ndim}")
        expected_bins = self.n_fft // 2 + 1
        if data.shape[2] != expected_bins:
            raise ValueError(
                f"bin count {data.shape[2]} does not match n_fft={self.n_fft} "
                f"(expected {expected_bins})"
            )
        if not (0 < self.hop <= self.n_fft):
            raise ValueError(f"hop must satisfy 0 < hop <= n_fft, got {self.hop}")
        self.data = data

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each bin."""
        return np.fft.rfftfreq(self.n_fft, d=1.0 / self.sample_rate)


def sqrt_hann(n_fft: int) -> np.ndarray:
    """Square-root periodic Hann window of length n_fft."""
    n = np.arange(n_fft)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / n_fft)
    return np.sqrt(hann)


def check_cola(window: np.ndarray, hop: int, tol: float = 1e-6) -> bool:
    """True if window*window overlap-adds to a constant at this hop.

    Checks the steady-state region only; the ramp at either end of a finite
    signal is handled by the per-sample normalizer in `istft`.
    """
    n_fft = len(window)
    if not (0 < hop <= n_fft):
        return False
    prod = window * window
    span = np.zeros(3 * n_fft)
    for start in range(0, 2 * n_fft + 1, hop):
        stop = start + n_fft
        if stop <= len(span):
            span[start:stop] += prod
    middle = span[n_fft : 2 * n_fft - hop]
    if middle.size == 0:
        return True
    ref = np.median(middle)
    if ref <= 0:
        return False
    return bool(np.max(np.abs(middle - ref)) <= tol * ref)


def stft(
    signal: TimeSignal,
    n_fft: int = DEFAULT_N_FFT,
    hop: int = DEFAULT_HOP,
) -> MultichannelSpectrogram:
    """Analyze a signal into (channels, frames, bins) with a sqrt-Hann window.

    Frames start at multiples of `hop`; trailing samples that do not fill a
    whole frame are dropped.  Raises ValueError for an empty signal, a
    non-power-of-two n_fft, an out-of-range hop, or a signal shorter than
    one frame.
    """
    if n_fft <= 0 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError(f"n_fft must be a positive power of two, got {n_fft}")
    if not (0 < hop <= n_fft):
        raise ValueError(f"hop must satisfy 0 < hop <= n_fft, got {hop}")
    x = signal.samples
    if x.shape[1] < n_fft:
        raise ValueError(
            f"signal length {x.shape[1]} is shorter than one frame of {n_fft}"
        )
    n_frames = 1 + (x.shape[1] - n_fft) // hop
    window = sqrt_hann(n_fft)

    # strided view (channels, frames, n_fft); copies only at the multiply
    stride_c, stride_s = x.strides
    frames = np.lib.stride_tricks.as_strided(
        x,
        shape=(x.shape[0], n_frames, n_fft),
        strides=(stride_c, hop * stride_s, stride_s),
        writeable=False,
    )
    spec = np.fft.rfft(frames * window, axis=-1)
    return MultichannelSpectrogram(
        data=spec, sample_rate=signal.sample_rate, n_fft=n_fft, hop=hop
    )


def istft(spec: MultichannelSpectrogram, length: int | None = None) -> TimeSignal:
    """Resynthesize a signal by weighted overlap-add with a sqrt-Hann window.

    Each output sample is divided by the accumulated analysis*synthesis
    window weight, so interior samples reconstruct exactly and the frame
    ramps at both ends stay bounded.  Raises ValueError if the window/hop
    pair does not satisfy the constant-overlap-add condition.
    """
    n_fft, hop = spec.n_fft, spec.hop
    window = sqrt_hann(n_fft)
    if not check_cola(window, hop):
        raise ValueError(
            f"window/hop pair (n_fft={n_fft}, hop={hop}) does not satisfy "
            "the constant-overlap-add condition"
        )
    n_frames = spec.n_frames
    total = n_fft + (n_frames - 1) * hop
    out = np.zeros((spec.n_channels, total))
    norm = np.zeros(total)

    frames = np.fft.irfft(spec.data, n=n_fft, axis=-1) * window
    wsum = window * window
    for t in range(n_frames):
        start = t * hop
        out[:, start : start + n_fft] += frames[:, t, :]
        norm[start : start + n_fft] += wsum

    covered = norm > _OLA_EPS
    out[:, covered] /= norm[covered]
    out[:, ~covered] = 0.0
    if length is not None:
        if length > total:
            out = np.pad(out, ((0, 0), (0, length - total)))
        else:
            out = out[:, :length]
    return TimeSignal(samples=out, sample_rate=spec.sample_rate)


def read_wav(path) -> TimeSignal:
    """Read a WAV file into a float64 TimeSignal.

    Accepts 16-bit PCM (scaled by 1/32768) and 32-bit float payloads;
    other encodings raise ValueError.
    """
    rate, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    data = data.T  # file stores (samples, channels)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(
            f"unsupported WAV sample format {data.dtype}; "
            "use 16-bit PCM or 32-bit float"
        )
    return TimeSignal(samples=samples, sample_rate=int(rate))


def write_wav(path, signal: TimeSignal, encoding: str = "float32") -> None:
    """Write a TimeSignal as WAV; `encoding` is 'float32' or 'int16'.

    float32 keeps sample values bit-exact through a read/write round trip;
    int16 clips to [-1, 1) and quantizes.
    """
    data = signal.samples.T
    if encoding == "float32":
        payload = data.astype(np.float32)
    elif encoding == "int16":
        clipped = np.clip(data, -1.0, 32767.0 / 32768.0)
        payload = np.round(clipped * 32768.0).astype(np.int16)
    else:
        raise ValueError(f"unknown encoding {encoding!r}; use 'float32' or 'int16'")
    if payload.shape[1] == 1:
        payload = payload[:, 0]
    wavfile.write(path, signal.sample_rate, payload)
