"""Sound-source localization: masked covariance tracking and whitened
steered-power scans over an azimuth grid.

The estimator keeps two exponentially-averaged spatial covariance
matrices per frequency bin, one gated by the speech mask and one by its
complement, whitens the speech covariance by the loaded noise covariance,
and scans steered power over candidate directions.  Scanning is done by a
compiled kernel when available, with a NumPy fallback selected at import.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _srp_numpy
from .audio import MultichannelSpectrogram
from .masking import TFMask, global_mask
from .scene import SPEED_OF_SOUND
from .utils import circ_median_deg, diag_load, hermitize

try:  # compiled scan kernel; optional
    from . import _srp_kernel as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

DEFAULT_ALPHA = 0.1
INIT_EPS = 1e-6
LOAD_SCALE = 1e-6
DEFAULT_FMIN = 100.0
DEFAULT_FMAX = 7600.0
DEFAULT_SUBSET = tuple(range(8))


def active_backend() -> str:
    """Name of the scan backend in use: 'kernel' or 'numpy'.

    Setting the environment variable BEAMKIN_PURE forces the fallback.
    """
    if _compiled is None or os.environ.get("BEAMKIN_PURE"):
        return "numpy"
    return "kernel"


def _resolve_backend(name: str | None):
    if name is None:
        name = active_backend()
    if name == "numpy":
        return _srp_numpy
    if name == "kernel":
        if _compiled is None:
            raise RuntimeError("compiled scan kernel is not available in this build")
        return _compiled
    raise ValueError(f"unknown backend {name!r}; use 'kernel' or 'numpy'")


@dataclass
class ScmPair:
    """Speech/noise spatial covariance stacks, shape (bins, K, K).

    `alpha` is the adaptation rate for recursive tracking, or None for
    batch covariances.  Values are immutable by convention: updates return
    a new pair.
    """

    phi_xx: np.ndarray
    phi_bb: np.ndarray
    alpha: float | None = None

    def __post_init__(self):
        xx = np.asarray(self.phi_xx, dtype=np.complex128)
        bb = np.asarray(self.phi_bb, dtype=np.complex128)
        if xx.shape != bb.shape:
            raise ValueError(f"covariance shapes differ: {xx.shape} vs {bb.shape}")
        if xx.ndim != 3 or xx.shape[1] != xx.shape[2]:
            raise ValueError(f"covariances must be (bins, K, K), got {xx.shape}")
        if self.alpha is not None and not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        scale = 1.0 + max(np.max(np.abs(xx)), np.max(np.abs(bb)))
        for name, m in (("phi_xx", xx), ("phi_bb", bb)):
            drift = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))))
            if drift > 1e-10 * scale:
                raise ValueError(f"{name} is not Hermitian (max drift {drift:.3e})")
        self.phi_xx = xx
        self.phi_bb = bb

    @property
    def n_bins(self) -> int:
        return self.phi_xx.shape[0]

    @property
    def n_channels(self) -> int:
        return self.phi_xx.shape[1]


def init_scm(n_bins: int, n_channels: int, alpha: float = DEFAULT_ALPHA,
             eps: float = INIT_EPS) -> ScmPair:
    """Fresh tracking state: speech covariance 0, noise covariance eps*I."""
    eye = np.eye(n_channels, dtype=np.complex128)
    return ScmPair(
        phi_xx=np.zeros((n_bins, n_channels, n_channels), dtype=np.complex128),
        phi_bb=np.tile(eps * eye, (n_bins, 1, 1)),
        alpha=alpha,
    )


def update_oscm(state: ScmPair, frame: np.ndarray, mask_frame: np.ndarray) -> ScmPair:
    """One recursion step over all bins; returns a new ScmPair.

    frame: (bins, K) complex STFT slice for one time frame.
    mask_frame: (bins,) speech mask values in [0, 1].

    Each bin blends the previous covariance with the masked instantaneous
    outer product: phi <- (1-alpha)*phi + alpha*m*(y y^H), with m replaced
    by (1-m) for the noise track.
    """
    if state.alpha is None:
        raise ValueError("state has no adaptation rate; use init_scm for tracking")
    frame = np.asarray(frame, dtype=np.complex128)
    mask_frame = np.asarray(mask_frame, dtype=np.float64)
    if frame.shape != (state.n_bins, state.n_channels):
        raise ValueError(
            f"frame shape {frame.shape} does not match state "
            f"{(state.n_bins, state.n_channels)}"
        )
    if mask_frame.shape != (state.n_bins,):
        raise ValueError(f"mask_frame must be (bins,), got {mask_frame.shape}")
    if np.min(mask_frame) < 0.0 or np.max(mask_frame) > 1.0:
        raise ValueError("mask values must lie in [0, 1]")

    outer = frame[:, :, None] * np.conj(frame[:, None, :])
    m = mask_frame[:, None, None]
    keep = 1.0 - state.alpha
    return ScmPair(
        phi_xx=keep * state.phi_xx + state.alpha * (m * outer),
        phi_bb=keep * state.phi_bb + state.alpha * ((1.0 - m) * outer),
        alpha=state.alpha,
    )


def whiten(state: ScmPair, load_scale: float = LOAD_SCALE) -> np.ndarray:
    """Noise-whitened speech covariance per bin.

    Solves (phi_bb + load_scale * tr(phi_bb)/K * I) P = phi_xx so that P is
    the whitened covariance used by the steered-power scan.  Raises
    ValueError when a loaded noise covariance is singular.
    """
    loaded = diag_load(state.phi_bb, scale=load_scale)
    try:
        return np.linalg.solve(loaded, state.phi_xx)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "noise covariance is singular even after diagonal loading"
        ) from exc


@dataclass
class DoaGrid:
    """Candidate directions for the scan: unit vectors plus their azimuths."""

    directions: np.ndarray
    azimuths_deg: np.ndarray
    resolution: float

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        a = np.asarray(self.azimuths_deg, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3 or d.shape[0] != a.shape[0]:
            raise ValueError("directions must be (D, 3) aligned with azimuths_deg")
        norms = np.linalg.norm(d, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("directions must be unit vectors")
        self.directions = d
        self.azimuths_deg = a

    @classmethod
    def azimuth_ring(cls, resolution: float = 1.0) -> "DoaGrid":
        """Horizontal ring of directions spaced `resolution` degrees apart."""
        n = int(round(360.0 / resolution))
        if n < 1 or abs(n * resolution - 360.0) > 1e-9:
            raise ValueError(f"resolution {resolution} must divide 360 evenly")
        az = np.arange(n) * resolution
        rad = np.deg2rad(az)
        directions = np.stack(
            [np.cos(rad), np.sin(rad), np.zeros(n)], axis=1
        )
        return cls(directions=directions, azimuths_deg=az, resolution=resolution)

    @property
    def n_directions(self) -> int:
        return self.directions.shape[0]


@dataclass
class DoaEstimate:
    """Scan result: per-frame azimuth track and its circular-median summary."""

    per_frame_deg: np.ndarray
    summary_deg: float
    peak_power: np.ndarray
    resolution: float

    @property
    def n_frames(self) -> int:
        return self.per_frame_deg.shape[0]


def select_bins(n_fft: int, sample_rate: int,
                fmin: float = DEFAULT_FMIN, fmax: float = DEFAULT_FMAX) -> np.ndarray:
    """Indices of STFT bins whose center frequency lies in [fmin, fmax]."""
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    bins = np.flatnonzero((freqs >= fmin) & (freqs <= fmax))
    if bins.size == 0:
        raise ValueError(f"no bins fall inside [{fmin}, {fmax}] Hz")
    return bins


def steering_weight(f_bin: int, direction: np.ndarray, r_u: np.ndarray,
                    r_v: np.ndarray, sample_rate: int, n_fft: int) -> complex:
    """Relative phase between two microphones for a plane wave.

    For unit direction theta pointing from the array toward the source, the
    wave reaches microphone u earlier than v by (r_u - r_v).theta / c, so

      W(f, theta) = exp( j * 2*pi*f/n_fft * fs/c * (r_u - r_v).theta )

    with f the bin index.  A one-sample lead at f = n_fft/4 gives W = j.
    """
    direction = np.asarray(direction, dtype=np.float64)
    delta = np.asarray(r_u, dtype=np.float64) - np.asarray(r_v, dtype=np.float64)
    delay_samples = float(delta @ direction) * sample_rate / SPEED_OF_SOUND
    return complex(np.exp(2j * np.pi * f_bin * delay_samples / n_fft))


def steering_table(mic_positions: np.ndarray, directions: np.ndarray,
                   bins: np.ndarray, sample_rate: int, n_fft: int) -> np.ndarray:
    """Toward-source steering phases a[f, k, d] for the scan band.

    a_k(f, theta) = exp( j * 2*pi*f/n_fft * fs/c * r_k.theta ), so that the
    pairwise weight of `steering_weight` factors as a_u * conj(a_v).
    """
    mics = np.asarray(mic_positions, dtype=np.float64)
    proj = mics @ np.asarray(directions, dtype=np.float64).T  # (K, D) meters
    scale = 2.0 * np.pi * np.asarray(bins, dtype=np.float64) * sample_rate / (
        n_fft * SPEED_OF_SOUND
    )
    return np.exp(1j * scale[:, None, None] * proj[None, :, :])


def srp_power(whitened: np.ndarray, direction: np.ndarray,
              mic_positions: np.ndarray, bins: np.ndarray,
              sample_rate: int, n_fft: int) -> float:
    """Steered response power of a whitened covariance stack at one direction.

    whitened: (len(bins), K, K) complex, as produced by `whiten` on the
    scan band.  Computes the real part of the steered quadratic form
    a^H P a summed over bins, which equals the pairwise sum of
    W_uv(f, theta) * P_f[v, u] over microphone pairs.
    """
    whitened = np.asarray(whitened, dtype=np.complex128)
    steer = steering_table(mic_positions, np.asarray(direction)[None, :],
                           bins, sample_rate, n_fft)[:, :, 0]  # (F, K)
    quad = np.einsum("fu,fuv,fv->", np.conj(steer), whitened, steer)
    return float(quad.real)


# pair tables keyed by geometry; one scene geometry dominates a run, so a
# tiny cache avoids rebuilding a ~40 MB table per estimate
_TABLE_CACHE: dict = {}
_TABLE_CACHE_MAX = 4


def _pair_table(steer: np.ndarray) -> np.ndarray:
    """Real/imag pair features (F, P, 2, D) matching the backend packing."""
    f, k, d = steer.shape
    iu, iv = np.triu_indices(k, 1)
    s = np.conj(steer[:, iu, :]) * steer[:, iv, :]  # (F, P, D)
    table = np.empty((f, iu.size, 2, d))
    table[:, :, 0, :] = s.real
    table[:, :, 1, :] = s.imag
    return table


def _cached_pair_table(mics, grid, bins, sample_rate, n_fft):
    key = (
        mics.tobytes(),
        grid.resolution,
        grid.n_directions,
        int(bins[0]),
        int(bins[-1]),
        len(bins),
        sample_rate,
        n_fft,
    )
    hit = _TABLE_CACHE.get(key)
    if hit is None:
        steer = steering_table(mics, grid.directions, bins, sample_rate, n_fft)
        hit = _pair_table(steer)
        if len(_TABLE_CACHE) >= _TABLE_CACHE_MAX:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
        _TABLE_CACHE[key] = hit
    return hit


def estimate_doa(
    spec: MultichannelSpectrogram,
    mask: TFMask | np.ndarray,
    mic_positions: np.ndarray,
    subset=DEFAULT_SUBSET,
    grid: DoaGrid | None = None,
    alpha: float = DEFAULT_ALPHA,
    fmin: float = DEFAULT_FMIN,
    fmax: float = DEFAULT_FMAX,
    backend: str | None = None,
) -> DoaEstimate:
    """Track the speaker azimuth over frames and summarize it.

    spec: mixture spectrogram, all array channels.
    mask: multichannel TFMask (pooled by max over channels) or an already
          pooled (frames, bins) plane.
    mic_positions: (channels, 3) microphone coordinates for `spec`.
    subset: channel indices actually scanned (default: first eight).
    grid: candidate directions; defaults to a 1 degree azimuth ring.
    alpha: covariance adaptation rate.
    fmin/fmax: scan band in Hz.
    backend: 'kernel', 'numpy', or None for automatic selection.

    Per frame, the argmax of steered power picks an azimuth (ties resolve
    to the lowest grid index); the summary is the circular median of the
    per-frame track.
    """
    mics = np.asarray(mic_positions, dtype=np.float64)
    if mics.ndim != 2 or mics.shape != (spec.n_channels, 3):
        raise ValueError(
            f"mic_positions must be ({spec.n_channels}, 3), got {mics.shape}"
        )
    subset = tuple(int(k) for k in subset)
    if len(subset) < 2:
        raise ValueError("scan needs at least two channels")
    if len(set(subset)) != len(subset):
        raise ValueError("subset contains duplicate channels")
    if min(subset) < 0 or max(subset) >= spec.n_channels:
        raise ValueError(f"subset {subset} out of range for {spec.n_channels} channels")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if grid is None:
        grid = DoaGrid.azimuth_ring(1.0)

    if isinstance(mask, TFMask):
        if mask.values.shape[:2] != (spec.n_channels, spec.n_frames):
            raise ValueError("mask channel/frame grid does not match the spectrogram")
        plane = global_mask(mask)
    else:
        plane = np.asarray(mask, dtype=np.float64)
        if plane.ndim != 2:
            raise ValueError("pooled mask must be 2-D (frames, bins)")
    if plane.shape != (spec.n_frames, spec.n_bins):
        raise ValueError(
            f"mask plane {plane.shape} does not match spectrogram grid "
            f"{(spec.n_frames, spec.n_bins)}"
        )

    bins = select_bins(spec.n_fft, spec.sample_rate, fmin, fmax)
    sub = list(subset)
    y = np.ascontiguousarray(
        spec.data[sub][:, :, bins].transpose(1, 2, 0)
    )  # (T, F, Ks)
    plane_band = np.ascontiguousarray(plane[:, bins])

    mod = _resolve_backend(backend)
    pairs, diag_sum = mod.scan_pack(y, plane_band, alpha, INIT_EPS, LOAD_SCALE)

    table = _cached_pair_table(mics[sub], grid, bins, spec.sample_rate, spec.n_fft)
    t = spec.n_frames
    power = diag_sum[:, None] + pairs.reshape(t, -1) @ table.reshape(-1, grid.n_directions)

    idx = np.argmax(power, axis=1)
    per_frame = grid.azimuths_deg[idx]
    return DoaEstimate(
        per_frame_deg=per_frame,
        summary_deg=circ_median_deg(per_frame),
        peak_power=power[np.arange(t), idx],
        resolution=grid.resolution,
    )


def whitened_from_track(spec: MultichannelSpectrogram, plane: np.ndarray,
                        subset, bins: np.ndarray, alpha: float = DEFAULT_ALPHA):
    """Run the public recursion over all frames and whiten the final state.

    Convenience for tests and diagnostics; returns (state, whitened) where
    whitened has shape (len(bins), K, K).  Mirrors what the scan backends
    compute at the last frame, up to their absolute loading floor.
    """
    sub = list(subset)
    state = init_scm(len(bins), len(sub), alpha)
    for t in range(spec.n_frames):
        frame = spec.data[sub][:, t, :][:, bins].T  # (F, Ks)
        state = update_oscm(state, frame, plane[t, bins])
    return state, hermitize(whiten(state))
