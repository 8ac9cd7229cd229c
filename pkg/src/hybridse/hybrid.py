"""Model-input variants and bandwise mic/beam assembly."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hybridse.audio import Spectrogram, StftConfig
from hybridse.beamforming import BeamSpectrogram
from hybridse.geometry import MicArray

DEFAULT_CUTOFF_HZ = 1500.0

# variant -> (input_kind, reference_kind)
VARIANTS = {
    "Baseline1": ("mics", "frontal_mic"),
    "Baseline2": ("beams", "forward_beam"),
    "Hybrid1": ("beams", "frontal_mic"),
    "Hybrid2": ("bandwise", "forward_beam"),
    "Hybrid3": ("bandwise", "frontal_mic"),
}
FORWARD_BEAM = "front"


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    cutoff_hz: float = DEFAULT_CUTOFF_HZ

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")

    @property
    def input_kind(self) -> str:
        return VARIANTS[self.variant][0]

    @property
    def reference_kind(self) -> str:
        return VARIANTS[self.variant][1]


@dataclass(frozen=True)
class HybridInput:
    """Bandwise tensor: mic channels below ``cutoff_bin``, beam channels from it up."""

    data: np.ndarray  # [channels, bins, frames]
    cutoff_bin: int
    provenance: tuple[tuple[str, int, int], ...]  # (source, k_lo, k_hi)
    config: StftConfig = StftConfig()

    def source_band(self, source: str) -> tuple[int, int]:
        for name, lo, hi in self.provenance:
            if name == source:
                return lo, hi
        raise KeyError(source)


def cutoff_bin(f_c: float, config: StftConfig = StftConfig()) -> int:
    """``k_c = round(f_c / bin_width)`` with ties rounded up."""
    if not 0 < f_c < config.nyquist:
        raise ValueError(f"cutoff {f_c} Hz must lie in (0, {config.nyquist})")
    return int(math.floor(f_c / config.bin_width + 0.5))


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, (Spectrogram, BeamSpectrogram)) else np.asarray(x)


def assemble_bandwise(mic_spec, beam_spec, k_c: int) -> HybridInput:
    mics, beams = _data(mic_spec), _data(beam_spec)
    if mics.shape[0] != beams.shape[0]:
        raise ValueError(
            f"channel-count mismatch: {mics.shape[0]} mic channels vs {beams.shape[0]} beams"
        )
    if mics.shape != beams.shape:
        raise ValueError(f"shape mismatch: mics {mics.shape} vs beams {beams.shape}")
    n_bins = mics.shape[1]
    if not 0 <= k_c <= n_bins:
        raise ValueError(f"cutoff bin {k_c} outside [0, {n_bins}]")
    out = np.empty_like(mics)
    out[:, :k_c] = mics[:, :k_c]
    out[:, k_c:] = beams[:, k_c:]
    config = mic_spec.config if isinstance(mic_spec, Spectrogram) else StftConfig()
    provenance = (("mics", 0, k_c), ("beams", k_c, n_bins))
    return HybridInput(out, k_c, provenance, config)


def select_reference(
    config: ModelConfig, mic_spec: Spectrogram, beam_spec: BeamSpectrogram, array: MicArray, pose=None
) -> Spectrogram:
    """Frontal mic channel or the forward (front-labelled) beam.

    The frontal mic is found in the array frame; a yaw-only pose does not
    change which mic projects furthest onto the forward axis.
    """
    if config.reference_kind == "frontal_mic":
        return mic_spec.channel(array.frontal_mic())
    return beam_spec.beam(FORWARD_BEAM)


def build_model_input(config: ModelConfig, mic_spec: Spectrogram, beam_spec: BeamSpectrogram):
    kind = config.input_kind
    if kind == "mics":
        return mic_spec.data
    if kind == "beams":
        return beam_spec.data
    k_c = cutoff_bin(config.cutoff_hz, mic_spec.config)
    return assemble_bandwise(mic_spec, beam_spec, k_c).data
