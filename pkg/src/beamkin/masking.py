"""Time-frequency masks: oracle ratio masks, pooling, providers, file I/O.

Masks live on the same (channels, frames, bins) grid as spectrograms and
take values in [0, 1]; 1 marks speech-dominated cells.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .audio import MultichannelSpectrogram


@dataclass
class TFMask:
    """Mask tensor of shape (channels, frames, bins), values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"mask must be (channels, frames, bins), got ndim={values.ndim}")
        if values.size == 0:
            raise ValueError("mask is empty")
        if np.min(values) < 0.0 or np.max(values) > 1.0:
            raise ValueError("mask values must lie in [0, 1]")
        self.values = values

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def n_bins(self) -> int:
        return self.values.shape[2]

    def complement(self) -> "TFMask":
        return TFMask(values=1.0 - self.values)


def oracle_irm(clean: MultichannelSpectrogram, noise: MultichannelSpectrogram) -> TFMask:
    """Ideal ratio mask |X| / (|X| + |B|) from the separated images.

    Cells where both magnitudes vanish get mask 0 (no speech evidence).
    Shapes of the two spectrograms must match exactly.
    """
    if clean.data.shape != noise.data.shape:
        raise ValueError(
            f"clean and noise spectrograms must match, got "
            f"{clean.data.shape} vs {noise.data.shape}"
        )
    num = np.abs(clean.data)
    den = num + np.abs(noise.data)
    values = np.zeros_like(num)
    np.divide(num, den, out=values, where=den > 0)
    # clamp away rounding excursions so downstream [0, 1] checks hold
    np.clip(values, 0.0, 1.0, out=values)
    return TFMask(values=values)


def global_mask(mask: TFMask) -> np.ndarray:
    """Pool a multichannel mask to one (frames, bins) plane by max.

    The max preserves any channel's speech evidence, which keeps the
    localization stage from discarding cells that only some microphones see
    cleanly.  A single-channel mask passes through unchanged.
    """
    return np.max(mask.values, axis=0)


class MaskProvider(ABC):
    """Strategy object producing the mask used by localization/enhancement."""

    @abstractmethod
    def mask_for(
        self,
        mixture: MultichannelSpectrogram,
        clean: MultichannelSpectrogram | None = None,
        noise: MultichannelSpectrogram | None = None,
    ) -> TFMask:
        """Return a mask on the mixture's grid."""


class OracleMaskProvider(MaskProvider):
    """Computes the ideal ratio mask from the true separated images."""

    def mask_for(self, mixture, clean=None, noise=None) -> TFMask:
        if clean is None or noise is None:
            raise ValueError("oracle mask needs both the clean and noise images")
        return oracle_irm(clean, noise)


class FileMaskProvider(MaskProvider):
    """Loads a precomputed mask tensor and checks it fits the mixture."""

    def __init__(self, path):
        self.path = path

    def mask_for(self, mixture, clean=None, noise=None) -> TFMask:
        mask = load_mask(self.path)
        if mask.values.shape != mixture.data.shape:
            raise ValueError(
                f"mask shape {mask.values.shape} does not match "
                f"spectrogram shape {mixture.data.shape}"
            )
        return mask


def save_mask(path, mask: TFMask) -> None:
    """Store a mask tensor; the container records shape and dtype."""
    np.save(path, mask.values)


def load_mask(path) -> TFMask:
    """Load a mask tensor saved by `save_mask`; validates shape and range."""
    values = np.load(path)
    if values.ndim != 3:
        raise ValueError(
            f"mask file {path} must hold a (channels, frames, bins) tensor, "
            f"got ndim={values.ndim}"
        )
    if not np.issubdtype(values.dtype, np.floating):
        raise ValueError(f"mask file {path} must hold floats, got {values.dtype}")
    return TFMask(values=values)
