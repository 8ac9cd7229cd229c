"""Frequency-dependent delay-and-sum beamformers and the four-direction bank.

Weights follow the far-field plane-wave model. With array-frame mic
positions ``p_l`` (metres) and a unit look direction ``d``::

    tau_l  = -(d . p_l) / c
    a_l(k) = exp(-j 2 pi f_k tau_l)
    w_l(k) = a_l(k) / L

so that ``w^H(k) a(k) = 1`` at every bin. A beam output is ``w^H X``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from hybridse.audio import Spectrogram, StftConfig
from hybridse.geometry import MicArray
from hybridse.room import SPEED_OF_SOUND

BANK_DIRECTIONS = (
    ("front", (1.0, 0.0, 0.0)),
    ("back", (-1.0, 0.0, 0.0)),
    ("left", (0.0, 1.0, 0.0)),
    ("right", (0.0, -1.0, 0.0)),
)


def _unit(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64).ravel()
    if d.shape != (3,):
        raise ValueError(f"direction must be a 3-vector, got shape {d.shape}")
    norm = np.linalg.norm(d)
    if not np.isclose(norm, 1.0, rtol=0, atol=1e-9):
        raise ValueError(f"direction must be a unit vector, |d| = {norm:.6g}")
    return d


def steering_vector(array: MicArray, direction, freqs, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Plane-wave steering vectors, shape ``[len(freqs), L]``."""
    d = _unit(direction)
    tau = -(array.positions_m @ d) / c
    return np.exp(-2j * np.pi * np.outer(np.atleast_1d(freqs), tau))


def das_weights(
    array: MicArray, direction, config: StftConfig = StftConfig(), c: float = SPEED_OF_SOUND
) -> np.ndarray:
    """DAS weights ``[bins, L]`` steered to ``direction`` (array frame)."""
    return steering_vector(array, direction, config.bin_frequencies(), c) / array.L


def apply_beamformer(weights: np.ndarray, spec: Spectrogram) -> Spectrogram:
    """Per-bin, per-frame inner product ``w^H(k) X(k, i)``."""
    w = np.asarray(weights)
    if w.ndim != 2 or w.shape[0] != spec.config.bins:
        raise ValueError(f"weights must be [bins={spec.config.bins}, L], got shape {w.shape}")
    if w.shape[1] != spec.channel_count:
        raise ValueError(
            f"channel mismatch: weights have {w.shape[1]} channels, spectrogram has {spec.channel_count}"
        )
    out = np.einsum("kl,lkt->kt", w.conj(), spec.data)
    return Spectrogram(out[np.newaxis], spec.config, spec.length)


@dataclass(frozen=True)
class BeamformerBank:
    labels: tuple[str, ...]
    directions: np.ndarray  # [D, 3] unit vectors, array frame
    weights: np.ndarray  # [D, bins, L]
    array: MicArray
    config: StftConfig

    @property
    def D(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no beam labelled {label!r}; have {self.labels}") from None

    def to_dict(self) -> dict:
        return {
            "array": self.array.name,
            "fft_size": self.config.fft_size,
            "sample_rate": self.config.sample_rate,
            "beams": [
                {
                    "label": label,
                    "direction": self.directions[i].tolist(),
                    "weights_real": self.weights[i].real.tolist(),
                    "weights_imag": self.weights[i].imag.tolist(),
                }
                for i, label in enumerate(self.labels)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


@dataclass(frozen=True)
class BeamSpectrogram:
    """Beam outputs ``X_b``, shape ``[D, bins, frames]``."""

    spec: Spectrogram
    labels: tuple[str, ...]

    @property
    def data(self) -> np.ndarray:
        return self.spec.data

    def beam(self, label: str) -> Spectrogram:
        return self.spec.channel(self.labels.index(label))


def build_bank(
    array: MicArray, config: StftConfig = StftConfig(), c: float = SPEED_OF_SOUND
) -> BeamformerBank:
    """Front/back/left/right DAS beams in the array's own frame."""
    labels = tuple(label for label, _ in BANK_DIRECTIONS)
    dirs = np.array([d for _, d in BANK_DIRECTIONS])
    weights = np.stack([das_weights(array, d, config, c) for d in dirs])
    return BeamformerBank(labels, dirs, weights, array, config)


def apply_bank(bank: BeamformerBank, spec: Spectrogram) -> BeamSpectrogram:
    if spec.channel_count != bank.array.L:
        raise ValueError(
            f"channel mismatch: bank expects {bank.array.L} channels, spectrogram has {spec.channel_count}"
        )
    out = np.einsum("dkl,lkt->dkt", bank.weights.conj(), spec.data)
    return BeamSpectrogram(Spectrogram(out, spec.config, spec.length), bank.labels)


# ---------------------------------------------------------------------------
# Beam patterns
# ---------------------------------------------------------------------------


def _azimuth_directions(azimuths_deg) -> np.ndarray:
    az = np.deg2rad(np.asarray(azimuths_deg, dtype=np.float64))
    return np.stack([np.cos(az), np.sin(az), np.zeros_like(az)], axis=-1)


def directivity(
    weights_k: np.ndarray,
    array: MicArray,
    freq: float,
    azimuths_deg,
    c: float = SPEED_OF_SOUND,
    nyquist: float = StftConfig().nyquist,
) -> np.ndarray:
    """Horizontal-plane gain ``|w^H a(theta)|`` of one weight vector ``[L]`` at ``freq``.

    ``weights_k`` is the weight vector for the bin nearest ``freq``, or the
    analytic weights at ``freq`` (see :func:`beam_pattern`).
    """
    if not 0 <= freq <= nyquist:
        raise ValueError(f"frequency {freq} Hz outside [0, {nyquist}]")
    dirs = _azimuth_directions(azimuths_deg)
    tau = -(dirs @ array.positions_m.T) / c  # [A, L]
    a = np.exp(-2j * np.pi * freq * tau)
    return np.abs(a @ np.conj(weights_k))


def beam_pattern(array: MicArray, direction, freq: float, azimuths_deg, c: float = SPEED_OF_SOUND):
    """Pattern of a DAS beam steered to ``direction`` evaluated at exactly ``freq``."""
    w = steering_vector(array, direction, [freq], c)[0] / array.L
    return directivity(w, array, freq, azimuths_deg, c, nyquist=np.inf)


def main_lobe_width(azimuths_deg, gain, steer_deg: float = 0.0, level_db: float = -3.0) -> float:
    """Width in degrees of the contiguous region around ``steer_deg`` above ``level_db``.

    ``azimuths_deg`` must be a uniform grid covering a full turn. Returns
    360 when the pattern never drops below the level.
    """
    az = np.asarray(azimuths_deg, dtype=np.float64)
    g = np.asarray(gain, dtype=np.float64)
    step = az[1] - az[0]
    n = len(az)
    above = 20 * np.log10(np.maximum(g / g.max(), 1e-300)) >= level_db
    if above.all():
        return 360.0
    start = int(np.argmin(np.abs((az - steer_deg + 180) % 360 - 180)))
    right = 0
    while above[(start + right + 1) % n]:
        right += 1
    left = 0
    while above[(start - left - 1) % n]:
        left += 1
    return float((left + right + 1) * step)


def directivity_csv(array: MicArray, direction, freqs, azimuths_deg, c: float = SPEED_OF_SOUND) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["freq_hz", "azimuth_deg", "gain", "gain_db"])
    for f in freqs:
        g = beam_pattern(array, direction, f, azimuths_deg, c)
        for az, v in zip(azimuths_deg, g):
            writer.writerow([f"{f:g}", f"{az:g}", f"{v:.9f}", f"{20 * np.log10(max(v, 1e-300)):.4f}"])
    return buf.getvalue()
