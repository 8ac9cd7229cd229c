"""Corpus ingestion and a synthetic speech-like corpus generator."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import butter, lfilter, sosfilt

from hybridse.audio import SAMPLE_RATE, AudioBuffer, read_wav, write_wav

log = logging.getLogger(__name__)


@dataclass
class CorpusEntry:
    utterance_id: str
    path: str
    duration: float
    speaker_id: str | None = None


@dataclass
class CorpusManifest:
    entries: dict[str, CorpusEntry] = field(default_factory=dict)
    rejects: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return list(self.entries)

    def load(self, utterance_id: str) -> AudioBuffer:
        return read_wav(self.entries[utterance_id].path)

    def to_dict(self) -> dict:
        return {
            "utterances": [vars(e) for e in self.entries.values()],
            "rejects": self.rejects,
        }


def ingest_corpus(directory: str | Path) -> CorpusManifest:
    """Validate every ``*.wav`` under ``directory`` (16 kHz, mono, non-silent).

    Files that fail validation land in ``rejects`` with a reason. Utterance
    ids are relative paths without suffix, in sorted order; an optional
    speaker id is the parent directory name.
    """
    root = Path(directory)
    files = sorted(root.rglob("*.wav"))
    if not files:
        raise ValueError(f"empty corpus: no WAV files under {root}")
    manifest = CorpusManifest()
    for path in files:
        uid = path.relative_to(root).with_suffix("").as_posix()
        try:
            rate, data = wavfile.read(str(path))
        except Exception as exc:  # malformed RIFF
            manifest.rejects[uid] = f"unreadable: {exc}"
            continue
        if rate != SAMPLE_RATE:
            manifest.rejects[uid] = f"sample rate {rate} Hz, expected {SAMPLE_RATE} Hz"
            continue
        if data.ndim != 1:
            manifest.rejects[uid] = f"{data.shape[1]} channels, expected mono"
            continue
        if data.dtype not in (np.int16, np.float32, np.float64):
            manifest.rejects[uid] = f"unsupported sample format {data.dtype}"
            continue
        if not np.any(data):
            manifest.rejects[uid] = "zero power"
            continue
        speaker = path.parent.name if path.parent != root else None
        manifest.entries[uid] = CorpusEntry(uid, str(path), len(data) / rate, speaker)
    for uid, reason in manifest.rejects.items():
        log.warning("rejected %s: %s", uid, reason)
    if not manifest.entries:
        raise ValueError(f"empty corpus: no valid utterances under {root}")
    return manifest


# ---------------------------------------------------------------------------
# Synthetic speech
# ---------------------------------------------------------------------------

# rough vowel formant targets (Hz)
_VOWELS = (
    (730, 1090, 2440),
    (530, 1840, 2480),
    (270, 2290, 3010),
    (570, 840, 2410),
    (300, 870, 2240),
    (660, 1720, 2410),
    (490, 1350, 1690),
)


def _resonator(freq: float, bandwidth: float, sr: int):
    r = np.exp(-np.pi * bandwidth / sr)
    theta = 2 * np.pi * freq / sr
    a = [1.0, -2 * r * np.cos(theta), r * r]
    b = [1.0 - r]
    return b, a


def synth_utterance(rng: np.random.Generator, duration: float, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Speech-like signal: voiced syllables, fricatives and pauses.

    Voiced segments are a glottal pulse train through three formant
    resonators; fricatives are high-passed noise. Output RMS is 0.05.
    """
    n = int(duration * sr)
    out = np.zeros(n)
    f0_base = rng.uniform(90, 220)
    t = int(rng.uniform(0.05, 0.15) * sr)
    fric_sos = butter(4, rng.uniform(2500, 4500), "high", fs=sr, output="sos")
    while t < n:
        kind = rng.random()
        if kind < 0.7:
            seg = int(rng.uniform(0.12, 0.3) * sr)
            f0 = f0_base * (1 + 0.1 * np.sin(2 * np.pi * rng.uniform(2, 5) * np.arange(seg) / sr + rng.uniform(0, 6)))
            phase = np.cumsum(f0 / sr)
            pulses = np.diff(np.floor(phase), prepend=0.0)
            # -12 dB/oct glottal roll-off
            src = lfilter([1.0], [1.0, -1.94, 0.9409], pulses)
            formants = _VOWELS[rng.integers(len(_VOWELS))]
            y = src
            for f, bw in zip(formants, (80, 110, 160)):
                b, a = _resonator(f * rng.uniform(0.9, 1.1), bw, sr)
                y = lfilter(b, a, y)
            y = np.diff(y, prepend=0.0)  # lip radiation
            gain = 1.0
        elif kind < 0.85:
            seg = int(rng.uniform(0.06, 0.15) * sr)
            y = sosfilt(fric_sos, rng.standard_normal(seg))
            gain = 0.3
        else:
            t += int(rng.uniform(0.05, 0.2) * sr)
            continue
        env = np.sin(np.pi * np.arange(seg) / seg) ** 2
        y = y * env
        rms = np.sqrt(np.mean(y**2)) + 1e-12
        end = min(n, t + seg)
        out[t:end] += gain * (y / rms)[: end - t]
        t = end + int(rng.uniform(0.0, 0.06) * sr)
    return 0.05 * out / (np.sqrt(np.mean(out**2)) + 1e-12)


def synth_corpus(
    directory: str | Path,
    n_utterances: int = 40,
    seed: int = 0,
    duration_range: tuple[float, float] = (2.0, 3.0),
    n_speakers: int = 8,
) -> CorpusManifest:
    """Write a deterministic synthetic corpus as PCM16 WAV files and ingest it."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    seq = np.random.SeedSequence(seed)
    for i, child in enumerate(seq.spawn(n_utterances)):
        rng = np.random.default_rng(child)
        speaker = f"spk{i % n_speakers:02d}"
        (root / speaker).mkdir(exist_ok=True)
        sig = synth_utterance(rng, rng.uniform(*duration_range))
        write_wav(root / speaker / f"utt{i:04d}.wav", AudioBuffer(sig), subtype="pcm16")
    (root / "SYNTHETIC.json").write_text(
        json.dumps({"generator": "synth_corpus", "seed": seed, "n_utterances": n_utterances}) + "\n"
    )
    return ingest_corpus(root)
