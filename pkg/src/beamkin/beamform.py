"""Mask-driven distortionless beamforming on batch covariances.

Enhancement uses whole-utterance (batch) covariance estimates gated by a
per-channel mask, a minimum-variance weight rule normalized by the trace
of the whitened speech covariance, and a configurable reference channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import MultichannelSpectrogram
from .masking import TFMask
from .ssl import LOAD_SCALE, ScmPair
from .utils import diag_load

# a whitened-trace magnitude at or below this counts as a degenerate bin
DEGENERATE_TRACE = 1e-12

# refuse to return weights when more than this fraction of bins degenerates
MAX_DEGENERATE_FRACTION = 0.5


@dataclass
class BeamformerWeights:
    """Per-bin weight vectors, shape (bins, channels)."""

    w: np.ndarray
    reference: int  # 1-based reference channel the weights were built for

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.complex128)
        if w.ndim != 2:
            raise ValueError(f"weights must be (bins, channels), got ndim={w.ndim}")
        if not np.all(np.isfinite(w.view(np.float64))):
            raise ValueError("beamformer weights contain non-finite values")
        if not (1 <= self.reference <= w.shape[1]):
            raise ValueError(
                f"reference channel {self.reference} out of range 1..{w.shape[1]}"
            )
        self.w = w


@dataclass
class ReferenceSelector:
    """How to pick the reference channel: a fixed index or a metric sweep."""

    mode: str
    channel: int | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "sweep"):
            raise ValueError(f"mode must be 'fixed' or 'sweep', got {self.mode!r}")
        if self.mode == "fixed":
            if self.channel is None or self.channel < 1:
                raise ValueError("fixed mode needs a 1-based channel index")

    @classmethod
    def fixed(cls, channel: int) -> "ReferenceSelector":
        return cls(mode="fixed", channel=channel)

    @classmethod
    def sweep(cls) -> "ReferenceSelector":
        return cls(mode="sweep")


def batch_scm(spec: MultichannelSpectrogram, mask: TFMask) -> ScmPair:
    """Whole-utterance speech/noise covariances from per-channel masks.

    The mask gates each channel's spectrogram into a speech estimate
    mask * Y and a noise estimate (1 - mask) * Y; covariances sum the
    outer products over all frames (the common scale cancels in the
    beamformer quotient).  Returns a batch ScmPair (alpha is None).
    """
    if mask.values.shape != spec.data.shape:
        raise ValueError(
            f"mask shape {mask.values.shape} does not match spectrogram "
            f"{spec.data.shape}"
        )
    y = spec.data  # (K, T, F)
    xh = mask.values * y
    bh = (1.0 - mask.values) * y
    phi_xx = np.einsum("ktf,ltf->fkl", xh, np.conj(xh))
    phi_bb = np.einsum("ktf,ltf->fkl", bh, np.conj(bh))
    return ScmPair(phi_xx=phi_xx, phi_bb=phi_bb, alpha=None)


def _whitened_stack(scm: ScmPair, load_scale: float):
    """Loaded-solve of the noise covariance against the speech covariance.

    Returns (G, traces, degenerate) where degenerate marks bins whose noise
    covariance has no energy or whose whitened trace vanishes; those bins
    cannot support a variance-minimizing solution and fall back to the
    reference selector weight downstream.
    """
    tr_bb = np.trace(scm.phi_bb, axis1=-2, axis2=-1).real
    k = scm.n_channels
    g = np.zeros_like(scm.phi_xx)
    usable = tr_bb > 0.0
    if np.any(usable):
        loaded = diag_load(scm.phi_bb[usable], scale=load_scale)
        g[usable] = np.linalg.solve(loaded, scm.phi_xx[usable])
    traces = np.trace(g, axis1=-2, axis2=-1)
    degenerate = (~usable) | (np.abs(traces) <= DEGENERATE_TRACE)
    return g, traces, degenerate


def mvdr_weights(scm: ScmPair, reference: int,
                 load_scale: float = LOAD_SCALE,
                 max_degenerate_fraction: float | None = MAX_DEGENERATE_FRACTION,
                 ) -> BeamformerWeights:
    """Distortionless weights toward a 1-based reference channel.

    Per bin, w = (phi_bb^-1 phi_xx / tr(phi_bb^-1 phi_xx)) u_ref with the
    noise covariance diagonally loaded before the solve.  Degenerate bins
    (zero noise energy or vanishing whitened trace) pass the reference
    channel through unchanged; if more than `max_degenerate_fraction` of
    the bins degenerate the covariances are unusable and ValueError is
    raised.  Pass None to disable the cap: a noiseless scene degenerates
    everywhere by construction and legitimately reduces to passthrough.
    """
    k = scm.n_channels
    if not (1 <= reference <= k):
        raise ValueError(f"reference channel {reference} out of range 1..{k}")
    g, traces, degenerate = _whitened_stack(scm, load_scale)
    n_deg = int(np.count_nonzero(degenerate))
    if (max_degenerate_fraction is not None
            and n_deg > max_degenerate_fraction * scm.n_bins):
        raise ValueError(
            f"{n_deg} of {scm.n_bins} bins are degenerate; covariances do not "
            "support beamforming"
        )
    ref = reference - 1
    w = np.zeros((scm.n_bins, k), dtype=np.complex128)
    ok = ~degenerate
    w[ok] = g[ok, :, ref] / traces[ok, None]
    w[degenerate, ref] = 1.0
    return BeamformerWeights(w=w, reference=reference)


def apply_beamformer(spec: MultichannelSpectrogram,
                     weights: BeamformerWeights) -> MultichannelSpectrogram:
    """Filter-and-sum: one output channel, same frame grid as the input."""
    if weights.w.shape != (spec.n_bins, spec.n_channels):
        raise ValueError(
            f"weights shape {weights.w.shape} does not match spectrogram "
            f"({spec.n_bins}, {spec.n_channels})"
        )
    out = np.einsum("fk,ktf->tf", np.conj(weights.w), spec.data)
    return MultichannelSpectrogram(
        data=out[None, :, :],
        sample_rate=spec.sample_rate,
        n_fft=spec.n_fft,
        hop=spec.hop,
    )


@dataclass
class SweepResult:
    """Outcome of a reference sweep: per-channel scores, best channel."""

    scores: np.ndarray  # (channels,) metric value per 1-based candidate
    best: int  # 1-based channel with the highest score

    @property
    def n_channels(self) -> int:
        return self.scores.shape[0]


def reference_sweep(spec: MultichannelSpectrogram, mask: TFMask, metric,
                    load_scale: float = LOAD_SCALE) -> SweepResult:
    """Try every reference channel and keep the best-scoring one.

    `metric` is called as metric(enhanced_spec, channel_1based) and must
    return a float to maximize.  The covariance solve is shared across
    candidates, so the sweep costs one solve plus K beamforming passes.
    Ties resolve to the lowest channel index.
    """
    scm = batch_scm(spec, mask)
    g, traces, degenerate = _whitened_stack(scm, load_scale)
    n_deg = int(np.count_nonzero(degenerate))
    if n_deg > MAX_DEGENERATE_FRACTION * scm.n_bins:
        raise ValueError(
            f"{n_deg} of {scm.n_bins} bins are degenerate; covariances do not "
            "support beamforming"
        )
    k = scm.n_channels
    ok = ~degenerate
    scores = np.empty(k)
    for ref in range(k):
        w = np.zeros((scm.n_bins, k), dtype=np.complex128)
        w[ok] = g[ok, :, ref] / traces[ok, None]
        w[degenerate, ref] = 1.0
        enhanced = apply_beamformer(spec, BeamformerWeights(w=w, reference=ref + 1))
        scores[ref] = float(metric(enhanced, ref + 1))
    best = int(np.argmax(scores)) + 1
    return SweepResult(scores=scores, best=best)
