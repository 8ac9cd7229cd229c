# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fractional-delay accumulation kernel for image-source RIRs."""
from libc.math cimport sin, cos, floor, M_PI

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF HALF_WIDTH = 40
DEF N_TAPS = 81


def accumulate_arrivals(double[::1] out, delays, amplitudes):
    """Add ``amp * hann(n - d) * sinc(n - d)`` for every arrival into ``out``.

    Taps falling outside ``[0, len(out))`` are dropped.
    """
    cdef double[::1] d = np.ascontiguousarray(delays, dtype=np.float64)
    cdef double[::1] a = np.ascontiguousarray(amplitudes, dtype=np.float64)
    cdef Py_ssize_t n_out = out.shape[0]
    cdef Py_ssize_t m = d.shape[0]
    cdef Py_ssize_t i, j, j0, j1
    cdef long base
    cdef double frac, x, s, span = 2.0 * (HALF_WIDTH + 1)
    cdef double amp_sin, cos_b, sin_b
    cdef double cos_off[N_TAPS]
    cdef double sin_off[N_TAPS]
    cdef double neg_sign[N_TAPS]
    cdef double offset[N_TAPS]
    for j in range(N_TAPS):
        offset[j] = j - HALF_WIDTH
        cos_off[j] = cos(2.0 * M_PI * offset[j] / span)
        sin_off[j] = sin(2.0 * M_PI * offset[j] / span)
        # sin(pi * (k - frac)) = -(-1)^k sin(pi * frac) for integer k
        neg_sign[j] = -1.0 if (j - HALF_WIDTH) % 2 == 0 else 1.0
    for i in range(m):
        base = <long> floor(d[i])
        frac = d[i] - base
        j0 = HALF_WIDTH - base if base < HALF_WIDTH else 0
        j1 = n_out - base + HALF_WIDTH if base + HALF_WIDTH >= n_out else N_TAPS
        if j1 <= j0:
            continue
        if frac == 0.0:
            # integer delay: the sinc is a unit impulse
            if 0 <= base < n_out:
                out[base] += a[i]
            continue
        amp_sin = a[i] * sin(M_PI * frac) / M_PI
        cos_b = cos(2.0 * M_PI * frac / span)
        sin_b = sin(2.0 * M_PI * frac / span)
        for j in range(j0, j1):
            x = offset[j] - frac
            s = neg_sign[j] * amp_sin / x
            # cos(2 pi (k - frac) / span) by angle subtraction
            out[base + j - HALF_WIDTH] += s * (0.5 + 0.5 * (cos_off[j] * cos_b + sin_off[j] * sin_b))
    return np.asarray(out)
