# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scan backend: masked SCM recursion fused with whitening.

Mirrors `_srp_numpy.scan_pack` (see that module for the packing contract
and the meaning of every argument).  The per-bin linear solve uses an
in-place complex Cholesky factorization, valid because the loaded noise
covariance is Hermitian positive definite by construction.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef double complex zdouble

# matches _srp_numpy.ABS_FLOOR
cdef double ABS_FLOOR = 1e-30


def scan_pack(object Y_in, object mask_in, double alpha,
              double init_eps, double load_scale):
    """Masked SCM recursion + whitened pair packing; see `_srp_numpy`."""
    Y_arr = np.ascontiguousarray(Y_in, dtype=np.complex128)
    mask_arr = np.ascontiguousarray(mask_in, dtype=np.float64)
    if Y_arr.ndim != 3:
        raise ValueError(f"Y must be (frames, bins, channels), got ndim={Y_arr.ndim}")
    cdef Py_ssize_t T = Y_arr.shape[0]
    cdef Py_ssize_t F = Y_arr.shape[1]
    cdef Py_ssize_t K = Y_arr.shape[2]
    if mask_arr.shape != (T, F):
        raise ValueError(
            f"mask shape {mask_arr.shape} does not match frames {(T, F)}"
        )
    cdef Py_ssize_t P = K * (K - 1) // 2

    pairs_arr = np.empty((T, F, P, 2), dtype=np.float64)
    diag_arr = np.empty(T, dtype=np.float64)
    xx_arr = np.zeros((F, K, K), dtype=np.complex128)
    bb_arr = np.zeros((F, K, K), dtype=np.complex128)
    chol_arr = np.zeros((K, K), dtype=np.complex128)
    sol_arr = np.zeros((K, K), dtype=np.complex128)
    work_arr = np.zeros(K, dtype=np.complex128)
    invd_arr = np.zeros(K, dtype=np.float64)

    cdef zdouble[:, :, ::1] Y = Y_arr
    cdef double[:, ::1] mask = mask_arr
    cdef double[:, :, :, ::1] pairs = pairs_arr
    cdef double[::1] diag_sum = diag_arr
    cdef zdouble[:, :, ::1] xx = xx_arr
    cdef zdouble[:, :, ::1] bb = bb_arr
    cdef zdouble[:, ::1] L = chol_arr
    cdef zdouble[:, ::1] Z = sol_arr
    cdef zdouble[::1] w = work_arr
    cdef double[::1] invd = invd_arr

    cdef Py_ssize_t t, f, i, j, k, c, p
    cdef double keep = 1.0 - alpha
    cdef double m, wx, wb, tr, load, dsum, s, hre, him
    cdef zdouble acc, yi

    for i in range(K):
        for f in range(F):
            bb[f, i, i] = init_eps

    with nogil:
        for t in range(T):
            dsum = 0.0
            for f in range(F):
                m = mask[t, f]
                wx = alpha * m
                wb = alpha * (1.0 - m)

                # masked outer-product recursion; the stacks stay Hermitian,
                # so compute the lower triangle and mirror it
                for i in range(K):
                    yi = Y[t, f, i]
                    for j in range(i + 1):
                        acc = yi * Y[t, f, j].conjugate()
                        xx[f, i, j] = keep * xx[f, i, j] + wx * acc
                        bb[f, i, j] = keep * bb[f, i, j] + wb * acc
                        if j < i:
                            xx[f, j, i] = xx[f, i, j].conjugate()
                            bb[f, j, i] = bb[f, i, j].conjugate()

                # trace-scaled diagonal loading
                tr = 0.0
                for i in range(K):
                    tr += bb[f, i, i].real
                load = load_scale * tr / K + ABS_FLOOR

                # lower Cholesky of bb[f] + load*I; the diagonal of L is
                # real, so divisions become reciprocal multiplies
                for i in range(K):
                    for j in range(i):
                        acc = bb[f, i, j]
                        for k in range(j):
                            acc = acc - L[i, k] * L[j, k].conjugate()
                        L[i, j] = acc * invd[j]
                    s = bb[f, i, i].real + load
                    for k in range(i):
                        s -= L[i, k].real * L[i, k].real + L[i, k].imag * L[i, k].imag
                    if s < 1e-300:
                        s = 1e-300
                    s = sqrt(s)
                    L[i, i] = s
                    invd[i] = 1.0 / s

                # solve (L L^H) Z = xx[f], one column at a time
                for c in range(K):
                    for i in range(K):
                        acc = xx[f, i, c]
                        for k in range(i):
                            acc = acc - L[i, k] * w[k]
                        w[i] = acc * invd[i]
                    for i in range(K - 1, -1, -1):
                        acc = w[i]
                        for k in range(i + 1, K):
                            acc = acc - L[k, i].conjugate() * Z[k, c]
                        Z[i, c] = acc * invd[i]

                # Hermitian part, packed as pair coefficients
                for i in range(K):
                    dsum += Z[i, i].real
                p = 0
                for i in range(K):
                    for j in range(i + 1, K):
                        hre = 0.5 * (Z[i, j].real + Z[j, i].real)
                        him = 0.5 * (Z[i, j].imag - Z[j, i].imag)
                        pairs[t, f, p, 0] = 2.0 * hre
                        pairs[t, f, p, 1] = -2.0 * him
                        p += 1
            diag_sum[t] = dsum

    return pairs_arr, diag_arr
