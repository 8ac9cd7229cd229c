"""Complex ratio masks: oracle construction, application and file I/O.

Mask files (``.hbmk``) are little-endian::

    offset  size  field
    0       4     magic b"HBMK"
    4       1     format version (1)
    5       4     uint32 bins
    9       4     uint32 frames
    13      8*B*F float32 pairs (real, imag), bin-major: entry (k, i) at index k*F + i
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from hybridse.audio import Spectrogram

DEFAULT_CLIP = 10.0
EPS_RELATIVE = 1e-12
MAGIC = b"HBMK"
VERSION = 1
_HEADER = struct.Struct("<4sBII")


def clip_magnitude(data: np.ndarray, clip: float) -> np.ndarray:
    """Scale entries with ``|m| > clip`` down to ``clip``, keeping their phase."""
    mag = np.abs(data)
    scale = np.where(mag > clip, clip / np.where(mag > 0, mag, 1.0), 1.0)
    return data * scale


@dataclass(frozen=True)
class Mask:
    data: np.ndarray  # [bins, frames]
    clip: float = DEFAULT_CLIP

    def __post_init__(self):
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ValueError(f"mask must be [bins, frames], got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("mask has non-finite entries")
        object.__setattr__(self, "data", clip_magnitude(data, self.clip))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _single(spec: Spectrogram) -> np.ndarray:
    if spec.channel_count != 1:
        raise ValueError(f"expected a single-channel spectrogram, got {spec.channel_count} channels")
    return spec.data[0]


def oracle_cirm(clean_ref: Spectrogram, ref: Spectrogram, clip: float = DEFAULT_CLIP) -> Mask:
    """``M = S / X`` where ``|X| > eps``, else 0; ``eps`` is 1e-12 of the RMS of ``X``."""
    s, x = _single(clean_ref), _single(ref)
    if s.shape != x.shape:
        raise ValueError(f"shape mismatch: clean {s.shape} vs reference {x.shape}")
    eps = EPS_RELATIVE * np.sqrt(np.mean(np.abs(x) ** 2))
    live = np.abs(x) > eps
    m = np.zeros_like(x)
    m[live] = s[live] / x[live]
    return Mask(m, clip)


def apply_mask(mask: Mask, ref: Spectrogram) -> Spectrogram:
    """``S_hat(k, i) = M(k, i) X_ref(k, i)``."""
    x = _single(ref)
    if mask.shape != x.shape:
        raise ValueError(f"shape mismatch: mask {mask.shape} vs reference {x.shape}")
    return Spectrogram((mask.data * x)[np.newaxis], ref.config, ref.length)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def save_mask(mask: Mask | np.ndarray, path: str | Path) -> None:
    data = mask.data if isinstance(mask, Mask) else np.asarray(mask, dtype=np.complex128)
    bins, frames = data.shape
    payload = np.empty((bins, frames, 2), dtype="<f4")
    payload[..., 0] = data.real
    payload[..., 1] = data.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, bins, frames))
        fh.write(payload.tobytes())


def load_external_mask(path: str | Path, expected_shape=None, clip: float = DEFAULT_CLIP) -> Mask:
    """Read an ``.hbmk`` file, checking dims against ``expected_shape`` (bins, frames)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, bins, frames = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported mask format version {version}, expected {VERSION}")
    if expected_shape is not None:
        exp_bins, exp_frames = expected_shape
        if bins != exp_bins:
            raise ValueError(f"{path}: expected {exp_bins} bins, found {bins}")
        if frames != exp_frames:
            raise ValueError(f"{path}: expected {exp_frames} frames, found {frames}")
    n_payload = 8 * bins * frames
    if len(raw) - _HEADER.size != n_payload:
        raise ValueError(
            f"{path}: payload has {len(raw) - _HEADER.size} bytes, expected {n_payload} for {bins}x{frames}"
        )
    pairs = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(bins, frames, 2)
    data = pairs[..., 0].astype(np.float64) + 1j * pairs[..., 1].astype(np.float64)
    return Mask(data, clip)


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class MaskProvider(Protocol):
    def produce(self, model_input: np.ndarray, reference: Spectrogram, key: str | None = None) -> Mask:
        ...


class OracleMaskProvider:
    """cIRM computed from a known clean reference; ignores the model input."""

    def __init__(self, clean_reference: Spectrogram, clip: float = DEFAULT_CLIP):
        self.clean_reference = clean_reference
        self.clip = clip

    def produce(self, model_input, reference: Spectrogram, key=None) -> Mask:
        return oracle_cirm(self.clean_reference, reference, self.clip)


class ExternalMaskProvider:
    """Masks written by an external estimator, at ``<root>/<key>.hbmk``."""

    def __init__(self, root: str | Path, clip: float = DEFAULT_CLIP):
        self.root = Path(root)
        self.clip = clip

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.hbmk"

    def produce(self, model_input, reference: Spectrogram, key=None) -> Mask:
        if key is None:
            raise ValueError("external masks need a key (scene id + variant)")
        path = self.path_for(key)
        if not path.exists():
            raise FileNotFoundError(f"missing external mask {path}")
        return load_external_mask(path, reference.data.shape[1:], self.clip)
