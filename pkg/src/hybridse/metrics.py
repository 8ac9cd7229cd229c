"""SI-SDR, bandwise SI-SDR and group aggregation."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from hybridse.audio import AudioBuffer, StftConfig, band_project

log = logging.getLogger(__name__)

SI_SDR_CAP_DB = 100.0
DEFAULT_BAND_EDGES = (0.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)
UNDEFINED_BAND_ENERGY = 1e-12

EXPERIMENT1_GROUPS = {"Ref": ("0",), "Small": ("0a", "0b", "0c"), "Large": ("0d", "0e", "0f")}
EXPERIMENT2_UNSEEN = ("0c", "1", "4")


def _as_1d(x) -> np.ndarray:
    if isinstance(x, AudioBuffer):
        if x.channel_count != 1:
            raise ValueError("expected a single-channel buffer")
        return x.samples[0]
    return np.asarray(x, dtype=np.float64).ravel()


def align(estimate, reference) -> tuple[np.ndarray, np.ndarray]:
    est, ref = _as_1d(estimate), _as_1d(reference)
    if est.shape != ref.shape:
        n = min(len(est), len(ref))
        log.warning("length mismatch %d vs %d; truncating to %d", len(est), len(ref), n)
        est, ref = est[:n], ref[:n]
    return est, ref


def si_sdr(estimate, reference) -> float:
    """Scale-invariant SDR in dB, clipped to +/-100 dB."""
    est, ref = align(estimate, reference)
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise ValueError("zero reference")
    alpha = np.dot(est, ref) / ref_energy
    target = alpha * ref
    residual = target - est
    num, den = np.dot(target, target), np.dot(residual, residual)
    if num == 0:
        return -SI_SDR_CAP_DB
    if den == 0:
        return SI_SDR_CAP_DB
    return float(np.clip(10.0 * np.log10(num / den), -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


@dataclass(frozen=True)
class BandSpec:
    edges: tuple[float, ...] = DEFAULT_BAND_EDGES

    def __post_init__(self):
        e = tuple(float(x) for x in self.edges)
        if len(e) < 2 or any(b <= a for a, b in zip(e, e[1:])) or e[0] < 0:
            raise ValueError(f"band edges must be strictly increasing and non-negative: {self.edges}")
        object.__setattr__(self, "edges", e)

    @property
    def bands(self) -> list[tuple[float, float]]:
        return list(zip(self.edges, self.edges[1:]))

    def labels(self) -> list[str]:
        return [f"{lo / 1000:g}-{hi / 1000:g}kHz" for lo, hi in self.bands]

    @classmethod
    def parse(cls, text: str) -> BandSpec:
        return cls(tuple(float(x) for x in text.split(",")))


def bandwise_si_sdr(estimate, reference, bands: BandSpec = BandSpec(), config: StftConfig = StftConfig()):
    """SI-SDR per band after STFT-domain band isolation of both signals.

    Returns one value per band; a band whose reference energy is below
    1e-12 of the full reference energy is reported as ``None``.
    """
    est, ref = align(estimate, reference)
    if bands.edges[-1] > config.nyquist:
        raise ValueError(f"band edge {bands.edges[-1]} above Nyquist")
    total = float(np.dot(ref, ref))
    if total == 0:
        raise ValueError("zero reference")
    est_buf, ref_buf = AudioBuffer(est, config.sample_rate), AudioBuffer(ref, config.sample_rate)
    out = []
    for band in bands.bands:
        ref_b = band_project(ref_buf, band, config).samples[0]
        if np.dot(ref_b, ref_b) < UNDEFINED_BAND_ENERGY * total:
            out.append(None)
            continue
        est_b = band_project(est_buf, band, config).samples[0]
        out.append(si_sdr(est_b, ref_b))
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class MetricRecord:
    scene_id: str
    array_id: str
    variant: str
    si_sdr: float | None
    bandwise: list[float | None] = field(default_factory=list)
    status: str = "ok"

    def row(self, labels: list[str]) -> dict:
        row = {
            "scene_id": self.scene_id,
            "array_id": self.array_id,
            "variant": self.variant,
            "status": self.status,
            "si_sdr_db": _fmt(self.si_sdr),
        }
        bw = self.bandwise or [None] * len(labels)
        for label, v in zip(labels, bw):
            row[f"si_sdr_{label}_db"] = _fmt(v)
        row["pesq"] = ""
        row["stoi"] = ""
        return row


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


@dataclass
class MetricsReport:
    records: list[MetricRecord]
    groups: dict[str, tuple[str, ...]]
    band_labels: list[str]
    per_group: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        buf = io.StringIO()
        fields = ["scene_id", "array_id", "variant", "status", "si_sdr_db"]
        fields += [f"si_sdr_{label}_db" for label in self.band_labels] + ["pesq", "stoi"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for rec in self.records:
            writer.writerow(rec.row(self.band_labels))
        return buf.getvalue()

    def json_text(self) -> str:
        doc = {
            "band_labels": self.band_labels,
            "groups": {k: list(v) for k, v in self.groups.items()},
            "means": self.per_group,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def experiment_groups(kind: str, arrays=None) -> dict[str, tuple[str, ...]]:
    """Array groupings: ``"experiment1"`` (Ref/Small/Large) or ``"experiment2"`` (Seen/Unseen)."""
    if kind == "experiment1":
        return dict(EXPERIMENT1_GROUPS)
    if kind == "experiment2":
        names = tuple(arrays) if arrays is not None else ("0", "0a", "0b", "0c", "0d", "0e", "0f", "1", "2", "3", "4")
        unseen = tuple(a for a in names if a in EXPERIMENT2_UNSEEN)
        seen = tuple(a for a in names if a not in EXPERIMENT2_UNSEEN)
        return {"Seen": seen, "Unseen": unseen}
    raise ValueError(f"unknown grouping {kind!r}")


def _mean(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else None


def aggregate(records: list[MetricRecord], groups: dict[str, tuple[str, ...]], band_labels=None) -> MetricsReport:
    """Arithmetic means per (group, variant), plus an ``All`` group."""
    if not records:
        raise ValueError("no records to aggregate")
    n_bands = max((len(r.bandwise) for r in records), default=0)
    band_labels = list(band_labels) if band_labels is not None else [f"band{i}" for i in range(n_bands)]
    groups = dict(groups)
    groups.setdefault("All", tuple(sorted({r.array_id for r in records})))
    per_group: dict = {}
    for gname, members in groups.items():
        by_variant = defaultdict(list)
        for r in records:
            if r.array_id in members and r.status == "ok":
                by_variant[r.variant].append(r)
        if not by_variant:
            log.warning("group %s has no records; omitted", gname)
            continue
        per_group[gname] = {}
        for variant in sorted(by_variant):
            recs = by_variant[variant]
            entry = {"count": len(recs), "si_sdr_db": _mean(r.si_sdr for r in recs)}
            for i, label in enumerate(band_labels):
                entry[f"si_sdr_{label}_db"] = _mean(r.bandwise[i] if i < len(r.bandwise) else None for r in recs)
            per_group[gname][variant] = entry
    return MetricsReport(list(records), groups, band_labels, per_group)
