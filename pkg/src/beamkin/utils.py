"""Small shared numerics: angle arithmetic and diagonal loading."""

import numpy as np


def wrap_deg(angle):
    """Wrap angles (degrees) into [0, 360)."""
    w = np.mod(angle, 360.0)
    # mod rounds tiny negative inputs to exactly 360.0; keep the range half-open
    return np.where(w >= 360.0, w - 360.0, w)


def circ_diff_deg(a, b):
    """Signed circular difference a - b in degrees, result in (-180, 180]."""
    d = np.mod(np.asarray(a, dtype=np.float64) - b, 360.0)
    return np.where(d > 180.0, d - 360.0, d)


def circ_mean_deg(angles):
    """Circular mean of angles in degrees, in [0, 360)."""
    a = np.deg2rad(np.asarray(angles, dtype=np.float64))
    if a.size == 0:
        raise ValueError("circ_mean_deg needs at least one angle")
    s = np.mean(np.sin(a))
    c = np.mean(np.cos(a))
    return float(wrap_deg(np.rad2deg(np.arctan2(s, c))))


def circ_median_deg(angles):
    """Circular median of angles in degrees, in [0, 360).

    Angles are unwrapped around their circular mean so that clusters
    straddling the 0/360 seam are handled correctly; the result is the
    ordinary median of the unwrapped values, wrapped back.
    """
    a = np.asarray(angles, dtype=np.float64)
    if a.size == 0:
        raise ValueError("circ_median_deg needs at least one angle")
    center = circ_mean_deg(a)
    dev = circ_diff_deg(a, center)
    return float(wrap_deg(center + np.median(dev)))


def hermitize(mats):
    """Return the Hermitian part 0.5 * (A + A^H) of a (..., K, K) stack."""
    mats = np.asarray(mats)
    return 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))


def diag_load(mats, scale=1e-6, floor=0.0):
    """Add trace-scaled diagonal loading to a (..., K, K) matrix stack.

    Each matrix A becomes A + (scale * tr(A) / K + floor) * I.  The trace is
    taken as its real part; `floor` is an absolute term used by iterative
    scan loops to keep exactly-zero matrices invertible.
    """
    mats = np.asarray(mats)
    k = mats.shape[-1]
    if mats.shape[-2] != k:
        raise ValueError(f"expected square matrices, got shape {mats.shape}")
    tr = np.trace(mats, axis1=-2, axis2=-1).real
    load = scale * tr / k + floor
    out = mats.copy()
    idx = np.arange(k)
    out[..., idx, idx] += load[..., None]
    return out
