"""Pure-NumPy scan backend for masked whitened localization.

This is the reference implementation of the per-frame recursion; the
compiled extension in `_srp_kernel` mirrors it exactly.  The backend
contract is `scan_pack`, which runs the masked covariance recursion over
frames, whitens the speech covariance by the loaded noise covariance, and
packs the Hermitian part of the result into real pair coefficients.  The
direction scan itself is a single real matrix product done by the caller,
so both backends share it.

Packing convention for a Hermitian H_f per frame and bin, with pair list
(u, v), u < v, in row-major upper-triangle order:

  pairs[t, f, p, 0] =  2 * Re H_uv      pairs[t, f, p, 1] = -2 * Im H_uv
  diag_sum[t]       = sum over f of Re tr(H_f)

so that for unit-modulus steering vectors a(theta),

  E(t, theta) = diag_sum[t]
              + sum_{f,p} pairs[t,f,p,:] . [Re s_uv, Im s_uv](f, theta)

with s_uv = conj(a_u) * a_v, which equals Re( a^H H a ) summed over bins.
"""

import numpy as np

# absolute loading floor: keeps an all-zero noise covariance invertible in
# the degenerate first frames of a noiseless scene; far below the
# trace-scaled loading whenever any noise energy exists
ABS_FLOOR = 1e-30


def scan_pack(Y, mask, alpha, init_eps, load_scale):
    """Run the masked SCM recursion + whitening over all frames.

    Y: (frames, bins, channels) complex128, already restricted to the scan
       band and channel subset.
    mask: (frames, bins) float64 in [0, 1].
    alpha: adaptation rate of the recursion.
    init_eps: initial noise covariance is init_eps * I (speech starts at 0).
    load_scale: relative diagonal loading applied before each solve.

    Returns (pairs, diag_sum) as documented in the module docstring.
    """
    Y = np.ascontiguousarray(Y, dtype=np.complex128)
    mask = np.asarray(mask, dtype=np.float64)
    T, F, K = Y.shape
    if mask.shape != (T, F):
        raise ValueError(f"mask shape {mask.shape} does not match frames {(T, F)}")
    iu, iv = np.triu_indices(K, 1)
    n_pairs = iu.size
    eye = np.eye(K, dtype=np.complex128)

    phi_xx = np.zeros((F, K, K), dtype=np.complex128)
    phi_bb = np.tile(init_eps * eye, (F, 1, 1))
    pairs = np.empty((T, F, n_pairs, 2))
    diag_sum = np.empty(T)
    keep = 1.0 - alpha

    for t in range(T):
        y = Y[t]
        outer = y[:, :, None] * np.conj(y[:, None, :])
        m = mask[t][:, None, None]
        phi_xx = keep * phi_xx + alpha * (m * outer)
        phi_bb = keep * phi_bb + alpha * ((1.0 - m) * outer)

        tr = np.einsum("fkk->f", phi_bb).real
        load = load_scale * tr / K + ABS_FLOOR
        loaded = phi_bb + load[:, None, None] * eye
        whitened = np.linalg.solve(loaded, phi_xx)
        h = 0.5 * (whitened + np.conj(np.swapaxes(whitened, -1, -2)))

        hp = h[:, iu, iv]
        pairs[t, :, :, 0] = 2.0 * hp.real
        pairs[t, :, :, 1] = -2.0 * hp.imag
        diag_sum[t] = np.einsum("fkk->", h).real
    return pairs, diag_sum
