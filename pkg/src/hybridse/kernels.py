"""Backend selection for the hot image-source kernel.

The compiled extension is preferred; set ``HYBRIDSE_PURE_PYTHON=1`` to force
the NumPy fallback.
"""
import os

from hybridse import _ism_py

_FORCE_PURE = os.environ.get("HYBRIDSE_PURE_PYTHON", "") not in ("", "0")

try:
    if _FORCE_PURE:
        raise ImportError("pure-python backend forced")
    from hybridse import _ism_core as _backend

    BACKEND = "cython"
except ImportError:
    _backend = _ism_py
    BACKEND = "python"

accumulate_arrivals = _backend.accumulate_arrivals
accumulate_arrivals_py = _ism_py.accumulate_arrivals


def compiled_available() -> bool:
    try:
        from hybridse import _ism_core  # noqa: F401
    except ImportError:
        return False
    return True
