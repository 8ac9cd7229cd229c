"""Time/frequency conversion, band projection and WAV I/O.

All processing runs in float64 / complex128. Spectrogram tensors are laid
out ``[channels, bins, frames]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
NORM_FLOOR = 0.5


@dataclass(frozen=True)
class AudioBuffer:
    """Multichannel time-domain samples, shape ``[channels, samples]``."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError(f"samples must be [channels, samples], got shape {data.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", data)

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    def channel(self, index: int) -> AudioBuffer:
        return AudioBuffer(self.samples[index], self.sample_rate)


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 256
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.fft_size % 2 or self.hop * 2 != self.fft_size:
            raise ValueError("hop must be fft_size / 2 with an even fft_size")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def bin_width(self) -> float:
        return self.sample_rate / self.fft_size

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2

    def window(self) -> np.ndarray:
        # periodic Hann: overlap-adds to a constant at 50% hop
        n = np.arange(self.fft_size)
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / self.fft_size)

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.bins) * self.bin_width


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT, shape ``[channels, bins, frames]``."""

    data: np.ndarray
    config: StftConfig = StftConfig()
    length: int | None = None  # original sample count, if known

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise ValueError(f"spectrogram must be [channels, bins, frames], got shape {data.shape}")
        if data.shape[1] != self.config.bins:
            raise ValueError(f"expected {self.config.bins} bins, got {data.shape[1]}")
        object.__setattr__(self, "data", data)

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[2]

    def channel(self, index: int) -> Spectrogram:
        return Spectrogram(self.data[index : index + 1], self.config, self.length)


def frame_count(n_samples: int, config: StftConfig) -> int:
    return math.ceil((n_samples - config.fft_size) / config.hop) + 1


def stft(buffer: AudioBuffer, config: StftConfig = StftConfig()) -> Spectrogram:
    """Hann-windowed one-sided STFT.

    Frame ``f`` covers samples ``[f*hop, f*hop + fft_size)``; a trailing
    partial frame is zero-padded.
    """
    n = buffer.length
    if n < config.fft_size:
        raise ValueError(f"input too short: {n} samples < fft_size {config.fft_size}")
    if buffer.sample_rate != config.sample_rate:
        raise ValueError(
            f"buffer sample rate {buffer.sample_rate} != config sample rate {config.sample_rate}"
        )
    n_frames = frame_count(n, config)
    padded_len = (n_frames - 1) * config.hop + config.fft_size
    x = np.zeros((buffer.channel_count, padded_len))
    x[:, :n] = buffer.samples
    idx = np.arange(config.fft_size)[None, :] + config.hop * np.arange(n_frames)[:, None]
    frames = x[:, idx] * config.window()  # [C, T, N]
    spec = np.fft.rfft(frames, axis=-1)  # [C, T, K]
    return Spectrogram(np.transpose(spec, (0, 2, 1)), config, n)


def synthesis_norm(n_frames: int, config: StftConfig) -> np.ndarray:
    """Overlap-added squared window, the pointwise synthesis normaliser."""
    w2 = config.window() ** 2
    out = np.zeros((n_frames - 1) * config.hop + config.fft_size)
    for f in range(n_frames):
        out[f * config.hop : f * config.hop + config.fft_size] += w2
    return out


def istft(spec: Spectrogram) -> AudioBuffer:
    """Weighted overlap-add inverse of :func:`stft`.

    Output length is ``(frames - 1) * hop + fft_size``. Reconstruction is
    exact away from the first and last half frame, which are tapered.
    """
    config = spec.config
    frames = np.fft.irfft(np.transpose(spec.data, (0, 2, 1)), n=config.fft_size, axis=-1)
    frames = frames * config.window()
    n_frames = spec.frames
    out = np.zeros((spec.channel_count, (n_frames - 1) * config.hop + config.fft_size))
    for f in range(n_frames):
        out[:, f * config.hop : f * config.hop + config.fft_size] += frames[:, f]
    # inside the signal the squared-window sum is >= 1/2; in the outer half
    # frames only one window contributes and dividing by it would blow up any
    # spectrum that is not an exact STFT, so clamp at the interior minimum
    norm = np.maximum(synthesis_norm(n_frames, config), NORM_FLOOR)
    return AudioBuffer(out / norm, config.sample_rate)


def band_bins(band: tuple[float, float], config: StftConfig) -> tuple[int, int]:
    """Map a ``[f_lo, f_hi)`` band to the bin range ``[k_lo, k_hi)``.

    Edges map with ``ceil(f / bin_width)``. A band whose upper edge is the
    Nyquist frequency also keeps the Nyquist bin, so ``[0, fs/2)`` is the
    identity projection.
    """
    f_lo, f_hi = band
    if not 0 <= f_lo < f_hi <= config.nyquist:
        raise ValueError(f"band must satisfy 0 <= f_lo < f_hi <= {config.nyquist}, got {band}")
    k_lo = math.ceil(f_lo / config.bin_width - 1e-9)
    k_hi = math.ceil(f_hi / config.bin_width - 1e-9)
    if f_hi >= config.nyquist:
        k_hi = config.bins
    if k_hi <= k_lo:
        raise ValueError(f"degenerate band {band}: no bins selected")
    return k_lo, k_hi


def band_project(
    buffer: AudioBuffer, band: tuple[float, float], config: StftConfig = StftConfig()
) -> AudioBuffer:
    """Keep only the STFT bins of ``band`` and resynthesise.

    The output is cropped to the input length; ``meta`` records the bin range.
    """
    k_lo, k_hi = band_bins(band, config)
    spec = stft(buffer, config)
    data = np.zeros_like(spec.data)
    data[:, k_lo:k_hi] = spec.data[:, k_lo:k_hi]
    out = istft(Spectrogram(data, config, spec.length))
    return AudioBuffer(
        out.samples[:, : buffer.length],
        buffer.sample_rate,
        meta={"band_hz": (float(band[0]), float(band[1])), "bins": (k_lo, k_hi)},
    )


def read_wav(path: str | Path, expected_rate: int | None = SAMPLE_RATE) -> AudioBuffer:
    """Read PCM16 or float32 RIFF WAV into a float64 buffer in [-1, 1]."""
    rate, data = wavfile.read(str(path))
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        data = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype} (need PCM16 or float32)")
    if data.ndim == 1:
        data = data[np.newaxis, :]
    else:
        data = data.T
    return AudioBuffer(data, rate)


def write_wav(path: str | Path, buffer: AudioBuffer, subtype: str = "float32") -> None:
    """Write interleaved WAV; ``subtype`` is ``"float32"`` or ``"pcm16"``."""
    data = buffer.samples.T
    if buffer.channel_count == 1:
        data = data[:, 0]
    if subtype == "float32":
        data = data.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(str(path), buffer.sample_rate, data)
