"""Wearable array geometries, perturbations and array pose."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

NOMINAL_MICS_MM = (
    (-29.0, 82.0, -5.0),
    (30.0, -1.0, -1.0),
    (11.0, -77.0, -2.0),
    (-60.0, -83.0, -5.0),
)
ARRAY_HEIGHT_M = 1.5
WALL_CLEARANCE_M = 1.0


@dataclass(frozen=True)
class MicArray:
    """Point microphones in mm relative to the array centre.

    ``provenance`` carries lineage metadata (base array, seed, magnitude).
    """

    name: str
    mics: np.ndarray
    forward_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mics = np.array(self.mics, dtype=np.float64)
        if mics.ndim != 2 or mics.shape[1] != 3 or mics.shape[0] < 1:
            raise ValueError(f"mics must be an [L, 3] array, got shape {mics.shape}")
        if not np.all(np.isfinite(mics)):
            raise ValueError("mic positions must be finite")
        diffs = np.linalg.norm(mics[:, None] - mics[None, :], axis=-1)
        if np.any(diffs[np.triu_indices(len(mics), 1)] == 0):
            raise ValueError("mic positions must be pairwise distinct")
        axis = np.array(self.forward_axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        mics.setflags(write=False)
        axis.setflags(write=False)
        object.__setattr__(self, "mics", mics)
        object.__setattr__(self, "forward_axis", axis)

    @property
    def L(self) -> int:
        return self.mics.shape[0]

    @property
    def positions_m(self) -> np.ndarray:
        return self.mics / 1000.0

    def centroid(self) -> np.ndarray:
        return self.mics.mean(axis=0)

    def frontal_mic(self) -> int:
        """Index of the mic with the largest projection on the forward axis."""
        return int(np.argmax(self.mics @ self.forward_axis))

    def __eq__(self, other):
        if not isinstance(other, MicArray):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.mics, other.mics)
            and np.array_equal(self.forward_axis, other.forward_axis)
        )

    __hash__ = None


@dataclass(frozen=True)
class ArrayPose:
    center: tuple[float, float, float]
    yaw: float

    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def validate(self, room_dims) -> None:
        x, y, z = self.center
        length, width, _ = room_dims
        if not (
            WALL_CLEARANCE_M <= x <= length - WALL_CLEARANCE_M
            and WALL_CLEARANCE_M <= y <= width - WALL_CLEARANCE_M
        ):
            raise ValueError(f"array centre {self.center} closer than 1 m to a wall")
        if not np.isclose(z, ARRAY_HEIGHT_M):
            raise ValueError(f"array centre height must be {ARRAY_HEIGHT_M} m, got {z}")


def nominal_array0() -> MicArray:
    return MicArray("0", np.array(NOMINAL_MICS_MM), provenance={"source": "nominal"})


def _unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    while np.any(norms < 1e-12):  # pragma: no cover - measure-zero event
        v = rng.standard_normal((n, 3))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def perturb(
    base: MicArray,
    magnitude: tuple[float, float],
    rng: np.random.Generator,
    name: str | None = None,
) -> MicArray:
    """Displace every mic by an independent random vector.

    Each displacement has a uniformly random direction on the sphere and a
    norm drawn uniformly from ``magnitude`` (mm).
    """
    lo, hi = magnitude
    if lo < 0 or hi < lo:
        raise ValueError(f"invalid magnitude range {magnitude}")
    directions = _unit_vectors(rng, base.L)
    norms = rng.uniform(lo, hi, size=(base.L, 1))
    mics = base.mics + directions * norms
    return MicArray(
        name or f"{base.name}~",
        mics,
        base.forward_axis,
        provenance={"base": base.name, "magnitude_mm": [float(lo), float(hi)]},
    )


def world_positions(array: MicArray, pose: ArrayPose) -> np.ndarray:
    """Mic positions in room coordinates (m), shape ``[L, 3]``."""
    return array.positions_m @ pose.rotation().T + np.asarray(pose.center, dtype=np.float64)


def world_forward(array: MicArray, pose: ArrayPose) -> np.ndarray:
    return pose.rotation() @ array.forward_axis


# ---------------------------------------------------------------------------
# Geometry file
# ---------------------------------------------------------------------------

GEOMETRY_FORMAT_VERSION = 1

# seeds used to generate the perturbed fixtures shipped in arrays.json
PERTURBATION_SEEDS = {
    "0a": (101, (5.0, 10.0)),
    "0b": (102, (5.0, 10.0)),
    "0c": (103, (5.0, 10.0)),
    "0d": (104, (20.0, 40.0)),
    "0e": (105, (20.0, 40.0)),
    "0f": (106, (20.0, 40.0)),
}

# hand-specified alternative layouts; all keep a mic ahead of the centre on +x
ALTERNATIVE_LAYOUTS = {
    "1": ((45.0, 70.0, 0.0), (50.0, -70.0, 0.0), (-40.0, 72.0, -8.0), (-42.0, -71.0, -8.0)),
    "2": ((10.0, 65.0, 12.0), (10.0, -65.0, 12.0), (-75.0, 80.0, -6.0), (-75.0, -80.0, -6.0)),
    "3": ((55.0, 30.0, 5.0), (55.0, -30.0, 5.0), (0.0, 90.0, -10.0), (-15.0, -88.0, -3.0)),
    "4": ((35.0, 0.0, 15.0), (-5.0, 60.0, -10.0), (-5.0, -60.0, -10.0), (-85.0, 0.0, -5.0)),
}

ARRAY_ORDER = ("0", "0a", "0b", "0c", "0d", "0e", "0f", "1", "2", "3", "4")


def generate_array_set() -> dict[str, MicArray]:
    """Build the eleven fixture arrays from their seeds and layouts."""
    base = nominal_array0()
    arrays = {"0": base}
    for name, (seed, mag) in PERTURBATION_SEEDS.items():
        arr = perturb(base, mag, np.random.default_rng(seed), name=name)
        arr.provenance["seed"] = seed
        arrays[name] = arr
    for name, mics in ALTERNATIVE_LAYOUTS.items():
        arrays[name] = MicArray(name, np.array(mics), provenance={"source": "hand-specified"})
    return arrays


def dump_geometry(arrays: dict[str, MicArray]) -> dict:
    return {
        "format": "hybridse-geometry",
        "version": GEOMETRY_FORMAT_VERSION,
        "units": "mm",
        "arrays": [
            {
                "name": a.name,
                "forward_axis": a.forward_axis.tolist(),
                "mics": a.mics.round(6).tolist(),
                "provenance": a.provenance,
            }
            for a in arrays.values()
        ],
    }


def parse_geometry(doc: dict) -> dict[str, MicArray]:
    if doc.get("format") != "hybridse-geometry":
        raise ValueError("not a geometry document")
    if doc.get("version") != GEOMETRY_FORMAT_VERSION:
        raise ValueError(f"unsupported geometry version {doc.get('version')}")
    arrays = {}
    for entry in doc["arrays"]:
        name = str(entry["name"])
        if name in arrays:
            raise ValueError(f"duplicate array name {name!r}")
        arrays[name] = MicArray(
            name, np.array(entry["mics"]), np.array(entry["forward_axis"]), dict(entry.get("provenance", {}))
        )
    return arrays


def load_geometry(path: str | Path | None = None) -> dict[str, MicArray]:
    """Load a geometry file; ``None`` loads the packaged fixture set."""
    if path is None:
        text = resources.files("hybridse").joinpath("data/arrays.json").read_text()
    else:
        text = Path(path).read_text()
    return parse_geometry(json.loads(text))


def save_geometry(arrays: dict[str, MicArray], path: str | Path) -> None:
    Path(path).write_text(json.dumps(dump_geometry(arrays), indent=2) + "\n")
