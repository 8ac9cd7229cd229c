"""NumPy implementation of the fractional-delay accumulation kernel.

Mirrors ``_ism_core.pyx``; used when the compiled extension is unavailable.
"""
import numpy as np

HALF_WIDTH = 40  # 81-tap filter
_WINDOW_SPAN = 2.0 * (HALF_WIDTH + 1)
_CHUNK = 8192


def accumulate_arrivals(out, delays, amplitudes):
    """Add ``amp * hann(n - d) * sinc(n - d)`` for every arrival into ``out``.

    Taps falling outside ``[0, len(out))`` are dropped.
    """
    out = np.asarray(out)
    delays = np.ascontiguousarray(delays, dtype=np.float64)
    amplitudes = np.ascontiguousarray(amplitudes, dtype=np.float64)
    n_out = out.shape[0]
    offsets = np.arange(-HALF_WIDTH, HALF_WIDTH + 1, dtype=np.float64)
    for start in range(0, delays.shape[0], _CHUNK):
        d = delays[start : start + _CHUNK]
        a = amplitudes[start : start + _CHUNK]
        base = np.floor(d)
        frac = d - base
        x = offsets[None, :] - frac[:, None]  # n - d
        vals = a[:, None] * np.sinc(x) * (0.5 + 0.5 * np.cos(2.0 * np.pi * x / _WINDOW_SPAN))
        idx = base[:, None].astype(np.int64) + offsets[None, :].astype(np.int64)
        keep = (idx >= 0) & (idx < n_out)
        out += np.bincount(idx[keep], weights=vals[keep], minlength=n_out)[:n_out]
    return out
