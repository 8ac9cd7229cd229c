"""Experiment orchestration: scene generation, enhancement, evaluation, reports.

Output layout::

    <output_dir>/<name>/
        config.json
        report.csv, report.json
        <array>/scene0000/
            manifest.json          everything needed to re-render the scene
            metrics.csv            this scene's rows
            mixture.wav, target_image.wav, enhanced_<variant>.wav   (save_audio)
            <variant>.hbmk                                          (save_audio)
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hybridse.audio import AudioBuffer, StftConfig, istft, read_wav, stft, write_wav
from hybridse.beamforming import apply_bank, build_bank
from hybridse.corpus import CorpusManifest, ingest_corpus, synth_corpus
from hybridse.geometry import ARRAY_ORDER, MicArray, load_geometry
from hybridse.hybrid import DEFAULT_CUTOFF_HZ, VARIANTS, ModelConfig, build_model_input, select_reference
from hybridse.masking import ExternalMaskProvider, OracleMaskProvider, apply_mask, save_mask
from hybridse.metrics import (
    DEFAULT_BAND_EDGES,
    EXPERIMENT2_UNSEEN,
    BandSpec,
    MetricRecord,
    MetricsReport,
    aggregate,
    bandwise_si_sdr,
    experiment_groups,
    si_sdr,
)
from hybridse.room import Scene, render_mixture, sample_scene

log = logging.getLogger(__name__)

NOISY = "Noisy"  # frontal mic, unprocessed
NOISY_BEAM = "NoisyBeam"  # forward beam, unprocessed
ALL_VARIANTS = tuple(VARIANTS)
SYNTHETIC_CORPUS = "synthetic"
SYNTHETIC_CORPUS_SIZE = 40
MANIFEST_FORMAT = "hybridse-scene"


@dataclass
class ExperimentConfig:
    """Experiment definition; mirrors the JSON config file one-to-one."""

    name: str = "experiment"
    corpus_dir: str = SYNTHETIC_CORPUS
    geometry_file: str | None = None
    arrays: list[str] = field(default_factory=lambda: list(ARRAY_ORDER))
    unseen: list[str] = field(default_factory=list)
    grouping: str = "experiment2"
    scenes_per_array: int = 10
    seed: int = 0
    variants: list[str] = field(default_factory=lambda: list(ALL_VARIANTS))
    cutoff_hz: float = DEFAULT_CUTOFF_HZ
    max_order: int | None = None
    bands: list[float] = field(default_factory=lambda: list(DEFAULT_BAND_EDGES))
    output_dir: str = "out"
    save_audio: bool = False
    jobs: int = 1

    def __post_init__(self):
        for v in self.variants:
            ModelConfig(v, self.cutoff_hz)
        if self.scenes_per_array < 1:
            raise ValueError("scenes_per_array must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        BandSpec(tuple(self.bands))

    @classmethod
    def experiment1(cls, **overrides) -> ExperimentConfig:
        """Nominal Array 0 plus its small and large perturbations, grouped Ref/Small/Large."""
        base = dict(name="experiment1", arrays=["0", "0a", "0b", "0c", "0d", "0e", "0f"], grouping="experiment1")
        return cls(**{**base, **overrides})

    @classmethod
    def experiment2(cls, **overrides) -> ExperimentConfig:
        """All eleven arrays; 0c, 1 and 4 are held out as unseen."""
        base = dict(name="experiment2", arrays=list(ARRAY_ORDER), unseen=list(EXPERIMENT2_UNSEEN), grouping="experiment2")
        return cls(**{**base, **overrides})

    @classmethod
    def preset(cls, name: str, **overrides) -> ExperimentConfig:
        presets = {"experiment1": cls.experiment1, "experiment2": cls.experiment2}
        if name not in presets:
            raise ValueError(f"unknown preset {name!r}; expected one of {sorted(presets)}")
        return presets[name](**overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        doc = dict(doc)
        preset = doc.pop("preset", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls.preset(preset, **doc) if preset else cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def experiment_dir(self) -> Path:
        return Path(self.output_dir) / self.name

    def groups(self) -> dict[str, tuple[str, ...]]:
        if self.grouping == "experiment2":
            unseen = tuple(a for a in self.arrays if a in self.unseen)
            return {"Seen": tuple(a for a in self.arrays if a not in unseen), "Unseen": unseen}
        return experiment_groups(self.grouping, self.arrays)

    def band_spec(self) -> BandSpec:
        return BandSpec(tuple(self.bands))


# ---------------------------------------------------------------------------
# Seeds, corpus, geometry
# ---------------------------------------------------------------------------


def scene_seed(master: int, array_index: int, scene_index: int) -> int:
    """Per-scene seed from a splittable stream; independent of scheduling."""
    ss = np.random.SeedSequence([master, array_index, scene_index])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def array_index(name: str) -> int:
    return ARRAY_ORDER.index(name) if name in ARRAY_ORDER else len(ARRAY_ORDER) + sum(map(ord, name))


@functools.lru_cache(maxsize=4)
def _corpus(corpus_dir: str, cache_root: str) -> CorpusManifest:
    if corpus_dir == SYNTHETIC_CORPUS:
        root = Path(cache_root) / "corpus"
        if (root / "SYNTHETIC.json").exists():
            return ingest_corpus(root)
        return synth_corpus(root, SYNTHETIC_CORPUS_SIZE, seed=0)
    return ingest_corpus(corpus_dir)


def load_corpus(config: ExperimentConfig) -> CorpusManifest:
    return _corpus(config.corpus_dir, str(Path(config.output_dir)))


@functools.lru_cache(maxsize=4)
def _geometry(path: str | None) -> dict[str, MicArray]:
    return load_geometry(path)


def scene_dir(config: ExperimentConfig, array: str, index: int) -> Path:
    return config.experiment_dir / array / f"scene{index:04d}"


def scene_id(array: str, index: int) -> str:
    return f"{array}/scene{index:04d}"


# ---------------------------------------------------------------------------
# Per-scene work
# ---------------------------------------------------------------------------


def make_scene(config: ExperimentConfig, array: str, index: int) -> Scene:
    corpus = load_corpus(config)
    seed = scene_seed(config.seed, array_index(array), index)
    geometry = _geometry(config.geometry_file)[array]
    return sample_scene(np.random.default_rng(seed), geometry, corpus.ids, seed=seed)


def render_scene(config: ExperimentConfig, scene: Scene):
    corpus = load_corpus(config)
    signals = [corpus.load(s.utterance_id).samples[0] for s in scene.sources]
    return render_mixture(scene, signals, config.max_order)


def scene_manifest(config: ExperimentConfig, scene: Scene, array: str, index: int) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "experiment": config.name,
        "scene_id": scene_id(array, index),
        "array_id": array,
        "scene_index": index,
        "master_seed": config.seed,
        "corpus_dir": config.corpus_dir,
        "max_order": config.max_order,
        "scene": scene.to_dict(),
    }


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _metric(estimate: np.ndarray, clean: np.ndarray, bands: BandSpec, config: StftConfig):
    return si_sdr(estimate, clean), bandwise_si_sdr(estimate, clean, bands, config)


def evaluate_scene(
    config: ExperimentConfig,
    array: str,
    index: int,
    mixture: AudioBuffer,
    target_image: AudioBuffer,
    masks: str = "oracle",
    out_dir: Path | None = None,
) -> list[MetricRecord]:
    """Enhance one rendered scene with every configured variant and score it.

    Each output is scored against the clean target passed through the same
    reference operator (frontal mic or forward beam). ``masks`` is
    ``"oracle"`` or a directory of external ``.hbmk`` files.
    """
    stft_config = StftConfig()
    bands = config.band_spec()
    sid = scene_id(array, index)
    geometry = _geometry(config.geometry_file)[array]
    n = mixture.length

    mic_spec = stft(mixture, stft_config)
    clean_spec = stft(target_image, stft_config)
    bank = build_bank(geometry, stft_config)
    beams = apply_bank(bank, mic_spec)
    clean_beams = apply_bank(bank, clean_spec)

    def time(spec):
        return istft(spec).samples[0, :n]

    records = []
    refs = {}
    for label, kind in ((NOISY, "Baseline1"), (NOISY_BEAM, "Baseline2")):
        mc = ModelConfig(kind, config.cutoff_hz)
        ref = select_reference(mc, mic_spec, beams, geometry)
        clean_ref = select_reference(mc, clean_spec, clean_beams, geometry)
        clean_t = time(clean_ref)
        refs[mc.reference_kind] = (ref, clean_ref, clean_t)
        records.append(MetricRecord(sid, array, label, *_metric(time(ref), clean_t, bands, stft_config)))

    provider = ExternalMaskProvider(masks) if masks != "oracle" else None
    for variant in config.variants:
        mc = ModelConfig(variant, config.cutoff_hz)
        ref, clean_ref, clean_t = refs[mc.reference_kind]
        model_input = build_model_input(mc, mic_spec, beams)
        key = f"{sid}/{variant}"
        try:
            p = provider or OracleMaskProvider(clean_ref)
            mask = p.produce(model_input, ref, key=key)
        except (FileNotFoundError, ValueError) as exc:
            log.warning("%s %s: %s", sid, variant, exc)
            records.append(MetricRecord(sid, array, variant, None, [], status=f"failed: {exc}"))
            continue
        enhanced = time(apply_mask(mask, ref))
        records.append(MetricRecord(sid, array, variant, *_metric(enhanced, clean_t, bands, stft_config)))
        if out_dir is not None and config.save_audio:
            save_mask(mask, out_dir / f"{variant}.hbmk")
            write_wav(out_dir / f"enhanced_{variant}.wav", AudioBuffer(enhanced))
    return records


def _scene_job(args) -> list[MetricRecord]:
    config, array, index, masks = args
    scene = make_scene(config, array, index)
    rendered = render_scene(config, scene)
    out = scene_dir(config, array, index)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", scene_manifest(config, scene, array, index))
    if config.save_audio:
        write_wav(out / "mixture.wav", rendered.mixture)
        write_wav(out / "target_image.wav", rendered.target_image)
    records = evaluate_scene(config, array, index, rendered.mixture, rendered.target_image, masks, out)
    labels = config.band_spec().labels()
    (out / "metrics.csv").write_text(MetricsReport(records, {}, labels).csv_text())
    return records


def _jobs(config: ExperimentConfig, masks: str):
    return [(config, a, i, masks) for a in config.arrays for i in range(config.scenes_per_array)]


def _map(fn, jobs, n_workers: int):
    if n_workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        # map preserves submission order, so the merge is deterministic
        return list(pool.map(fn, jobs))


def _variant_order(config: ExperimentConfig) -> dict[str, int]:
    return {v: i for i, v in enumerate([NOISY, NOISY_BEAM, *config.variants])}


def merge_records(config: ExperimentConfig, per_scene) -> list[MetricRecord]:
    order = _variant_order(config)
    arrays = {a: i for i, a in enumerate(config.arrays)}
    records = [r for batch in per_scene for r in batch]
    return sorted(records, key=lambda r: (arrays[r.array_id], r.scene_id, order[r.variant]))


def write_reports(config: ExperimentConfig, records: list[MetricRecord]) -> MetricsReport:
    report = aggregate(records, config.groups(), config.band_spec().labels())
    root = config.experiment_dir
    root.mkdir(parents=True, exist_ok=True)
    (root / "report.csv").write_text(report.csv_text())
    (root / "report.json").write_text(report.json_text())
    return report


def _prepare(config: ExperimentConfig) -> None:
    config.experiment_dir.mkdir(parents=True, exist_ok=True)
    doc = config.to_dict()
    doc.pop("jobs")  # scheduling does not affect results
    _write_json(config.experiment_dir / "config.json", doc)
    load_corpus(config)  # synthesise once before workers start


def run_experiment(config: ExperimentConfig, masks: str = "oracle") -> MetricsReport:
    """Generate, enhance and evaluate every (array, scene); write all outputs."""
    _prepare(config)
    per_scene = _map(_scene_job, _jobs(config, masks), config.jobs)
    return write_reports(config, merge_records(config, per_scene))


# ---------------------------------------------------------------------------
# Staged pipeline (gen -> enhance -> eval)
# ---------------------------------------------------------------------------


def _gen_job(args) -> None:
    config, array, index, _ = args
    scene = make_scene(config, array, index)
    rendered = render_scene(config, scene)
    out = scene_dir(config, array, index)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", scene_manifest(config, scene, array, index))
    write_wav(out / "mixture.wav", rendered.mixture)
    write_wav(out / "target_image.wav", rendered.target_image)


def generate(config: ExperimentConfig) -> None:
    """Sample and render every scene; writes manifests and multichannel WAVs."""
    _prepare(config)
    _map(_gen_job, _jobs(config, "oracle"), config.jobs)


def _enhance_job(args) -> list[MetricRecord]:
    config, array, index, masks = args
    out = scene_dir(config, array, index)
    if not (out / "mixture.wav").exists():
        raise FileNotFoundError(f"{out}: no rendered scene; run 'gen' first")
    mixture, target = read_wav(out / "mixture.wav"), read_wav(out / "target_image.wav")
    cfg = dataclasses.replace(config, save_audio=True)
    records = evaluate_scene(cfg, array, index, mixture, target, masks, out)
    (out / "metrics.csv").write_text(MetricsReport(records, {}, config.band_spec().labels()).csv_text())
    return records


def enhance(config: ExperimentConfig, masks: str = "oracle") -> list[MetricRecord]:
    """Apply masks to generated scenes, writing enhanced WAVs, masks and per-scene metrics."""
    return merge_records(config, _map(_enhance_job, _jobs(config, masks), config.jobs))


def _eval_job(args) -> list[MetricRecord]:
    config, array, index, _ = args
    out = scene_dir(config, array, index)
    path = out / "metrics.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path}: run 'enhance' first")
    return read_metrics_csv(path, config.band_spec().labels())


def evaluate(config: ExperimentConfig) -> MetricsReport:
    """Collect per-scene metrics into the experiment reports."""
    per_scene = [_eval_job(j) for j in _jobs(config, "oracle")]
    return write_reports(config, merge_records(config, per_scene))


def read_metrics_csv(path: str | Path, labels: list[str]) -> list[MetricRecord]:
    def num(s):
        return None if s == "" else float(s)

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            bw = [num(row[f"si_sdr_{label}_db"]) for label in labels]
            status = row["status"]
            out.append(
                MetricRecord(
                    row["scene_id"], row["array_id"], row["variant"], num(row["si_sdr_db"]),
                    bw if status == "ok" else [], status,
                )
            )
    return out


def rerender_from_manifest(path: str | Path, corpus: CorpusManifest):
    """Re-render a scene from its ``manifest.json`` alone (plus the corpus)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path}: not a scene manifest")
    scene = Scene.from_dict(doc["scene"])
    signals = [corpus.load(s.utterance_id).samples[0] for s in scene.sources]
    return scene, render_mixture(scene, signals, doc["max_order"])

