"""Image-source room simulation and scene sampling/rendering."""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.signal import butter, fftconvolve, sosfilt

from hybridse import kernels
from hybridse.audio import SAMPLE_RATE, AudioBuffer
from hybridse.geometry import (
    ARRAY_HEIGHT_M,
    WALL_CLEARANCE_M,
    ArrayPose,
    MicArray,
    world_forward,
    world_positions,
)

log = logging.getLogger(__name__)

SPEED_OF_SOUND = 343.0
SABINE_CONSTANT = 0.1611  # 24 ln(10) / c, s/m

ROOM_LENGTH_RANGE = (2.5, 5.0)
ROOM_WIDTH_RANGE = (3.0, 9.0)
ROOM_HEIGHT_RANGE = (2.2, 3.5)
T60_RANGE = (0.2, 0.5)
TARGET_DISTANCE_RANGE = (0.3, 1.0)
INTERFERER_DISTANCE_RANGE = (1.0, 8.0)
INTERFERER_HEIGHT_MEAN = 1.6
INTERFERER_HEIGHT_STD = 0.28
HEIGHT_CLEARANCE = 0.2
SECTOR_SPAN_DEG = (20.0, 340.0)
N_INTERFERERS = 5
SOURCE_WALL_MARGIN = 0.1
MAX_RETRIES = 1000
SOURCE_RETRIES = 200
NOISE_SNR_DB = 30.0
DC_BLOCK_HZ = 20.0
T60_FIT_RANGE_DB = (-5.0, -25.0)
# (mic, source) positions as fractions of the room dimensions
CALIBRATION_PAIRS = (
    ((0.5, 0.5, 0.5), (0.25, 0.3, 0.45)),
    ((0.35, 0.7, 0.55), (0.8, 0.2, 0.4)),
    ((0.7, 0.25, 0.5), (0.3, 0.85, 0.6)),
)


@dataclass(frozen=True)
class Room:
    """Shoebox room with uniform, frequency-independent wall reflection.

    ``absorption`` selects how the reflection coefficient follows from
    ``t60``: ``"matched"`` (default) calibrates it so the simulated decay
    has the requested T60, ``"sabine"`` uses the plain Sabine inversion.
    """

    length: float
    width: float
    height: float
    t60: float
    absorption: str = "matched"

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height])

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def surface(self) -> float:
        l, w, h = self.length, self.width, self.height
        return 2.0 * (l * w + l * h + w * h)

    @property
    def reflection_coefficient(self) -> float:
        if self.absorption == "sabine":
            return reflection_from_t60(self)
        if self.absorption == "matched":
            return matched_reflection(self)
        raise ValueError(f"unknown absorption model {self.absorption!r}")

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p > margin) and np.all(p < self.dims - margin))


@dataclass(frozen=True)
class SourceSpec:
    azimuth_deg: float  # relative to the array's forward axis
    distance: float  # horizontal distance from the array centre, m
    height: float
    utterance_id: str | None = None


@dataclass(frozen=True)
class Scene:
    room: Room
    pose: ArrayPose
    array: MicArray
    target: SourceSpec
    interferers: tuple[SourceSpec, ...]
    noise_snr_db: float = NOISE_SNR_DB
    seed: int | None = None

    def source_position(self, spec: SourceSpec) -> np.ndarray:
        yaw = self.pose.yaw + math.radians(spec.azimuth_deg)
        cx, cy, _ = self.pose.center
        return np.array([cx + spec.distance * math.cos(yaw), cy + spec.distance * math.sin(yaw), spec.height])

    @property
    def sources(self) -> tuple[SourceSpec, ...]:
        return (self.target, *self.interferers)

    def mic_positions(self) -> np.ndarray:
        return world_positions(self.array, self.pose)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "room": asdict(self.room),
            "reflection_coefficient": self.room.reflection_coefficient,
            "pose": {"center": list(self.pose.center), "yaw": self.pose.yaw},
            "array": {
                "name": self.array.name,
                "mics_mm": self.array.mics.tolist(),
                "forward_axis": self.array.forward_axis.tolist(),
            },
            "target": asdict(self.target),
            "interferers": [asdict(s) for s in self.interferers],
            "noise_snr_db": self.noise_snr_db,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Scene:
        arr = doc["array"]
        return cls(
            room=Room(**doc["room"]),
            pose=ArrayPose(tuple(doc["pose"]["center"]), doc["pose"]["yaw"]),
            array=MicArray(arr["name"], np.array(arr["mics_mm"]), np.array(arr["forward_axis"])),
            target=SourceSpec(**doc["target"]),
            interferers=tuple(SourceSpec(**s) for s in doc["interferers"]),
            noise_snr_db=doc["noise_snr_db"],
            seed=doc["seed"],
        )


@dataclass(frozen=True)
class Rir:
    taps: np.ndarray
    sample_rate: int
    direct_path_delay: float  # samples
    arrival_delays: np.ndarray = field(repr=False)
    arrival_amplitudes: np.ndarray = field(repr=False)
    arrival_orders: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# Absorption
# ---------------------------------------------------------------------------


def sabine_absorption(room: Room) -> float:
    if room.t60 <= 0:
        raise ValueError("t60 must be positive")
    return SABINE_CONSTANT * room.volume / (room.surface * room.t60)


def reflection_from_t60(room: Room) -> float:
    """Uniform amplitude reflection coefficient ``sqrt(1 - alpha)`` from Sabine."""
    alpha = sabine_absorption(room)
    if alpha >= 1.0:
        raise ValueError(f"infeasible T60 {room.t60} s for a {room.dims.tolist()} m room (alpha={alpha:.3f})")
    return math.sqrt(1.0 - min(alpha, 0.99))


def default_max_order(room: Room, c: float = SPEED_OF_SOUND, duration: float | None = None) -> int:
    """Smallest order that contains every image within ``c * duration`` of any point."""
    radius = c * (room.t60 if duration is None else duration)
    return int(math.ceil(radius * np.sum(1.0 / room.dims))) + 3


def _coarse_rir_t60(beta, r, orders, n, sample_rate):
    # nearest-sample rendering keeps the coherent structure of the tail
    idx = np.rint(r / SPEED_OF_SOUND * sample_rate).astype(np.int64)
    keep = idx < n
    taps = np.bincount(idx[keep], weights=beta ** orders[keep] / r[keep], minlength=n)[:n]
    taps = sosfilt(_dc_block(DC_BLOCK_HZ, sample_rate), taps)
    try:
        return schroeder_t60(taps, sample_rate)
    except ValueError:
        return 0.0


@functools.lru_cache(maxsize=256)
def matched_reflection(room: Room, sample_rate: int = SAMPLE_RATE) -> float:
    """Reflection coefficient whose image-source decay has the room's T60.

    Specular shoebox decays are not exponential, so the Sabine inversion
    overshoots the requested T60 in elongated rooms. This solves for the
    coefficient whose nearest-sample image-source response (same truncation,
    DC block and fit range as a rendered RIR) decays at ``t60`` on average
    over three fixed source/mic pairs.
    """
    reflection_from_t60(room)  # feasibility check
    n = int(math.ceil(room.t60 * sample_rate))
    reach = room.t60 * SPEED_OF_SOUND + 1.0
    pairs = []
    for mic_frac, src_frac in CALIBRATION_PAIRS:
        mic = room.dims * np.array(mic_frac)
        pos, orders = image_sources(room, room.dims * np.array(src_frac), default_max_order(room), reach, mic)
        pairs.append((np.linalg.norm(pos - mic, axis=1), orders))

    def err(log_absorption):
        beta = math.sqrt(1.0 - math.exp(log_absorption))
        return np.mean([_coarse_rir_t60(beta, r, o, n, sample_rate) for r, o in pairs]) - room.t60

    # decreasing absorption; the first sign change is the physical root
    grid = np.linspace(math.log(0.95), math.log(1e-3), 48)
    prev = grid[0]
    if err(prev) >= 0:
        raise ValueError(f"infeasible T60 {room.t60} s for this room")
    for g in grid[1:]:
        if err(g) >= 0:
            root = brentq(err, prev, g, xtol=1e-9)
            return math.sqrt(1.0 - math.exp(root))
        prev = g
    raise ValueError(f"could not match T60 {room.t60} s")


# ---------------------------------------------------------------------------
# Image sources
# ---------------------------------------------------------------------------


def _axis_images(coord: float, size: float, max_bounces: int):
    # image coordinate 2*n*size + (-1)^p * coord reflects |2n - p| times
    n = np.arange(-(max_bounces // 2) - 1, max_bounces // 2 + 2)
    pos, bounces = [], []
    for p in (0, 1):
        b = np.abs(2 * n - p)
        keep = b <= max_bounces
        pos.append(2 * n[keep] * size + (1 - 2 * p) * coord)
        bounces.append(b[keep])
    return np.concatenate(pos), np.concatenate(bounces)


def image_sources(room: Room, source, max_order: int, max_distance: float | None = None, center=None):
    """Image positions ``[M, 3]`` and reflection orders ``[M]`` of a shoebox room.

    Images with total order above ``max_order`` are dropped, as are images
    farther than ``max_distance`` from ``center`` when both are given.
    """
    src = np.asarray(source, dtype=np.float64)
    prune = max_distance is not None and center is not None
    c = np.asarray(center, dtype=np.float64) if prune else None
    axes = []
    for i in range(3):
        pos, bounces = _axis_images(src[i], room.dims[i], max_order)
        if prune:
            near = np.abs(pos - c[i]) <= max_distance
            pos, bounces = pos[near], bounces[near]
        axes.append((pos, bounces))
    (px, bx), (py, by), (pz, bz) = axes

    keep_xy = bx[:, None] + by[None, :] <= max_order
    if prune:
        dxy2 = (px - c[0])[:, None] ** 2 + (py - c[1])[None, :] ** 2
        keep_xy &= dxy2 <= max_distance**2
    ix, iy = np.nonzero(keep_xy)
    order = (bx[ix] + by[iy])[:, None] + bz[None, :]
    keep = order <= max_order
    if prune:
        d2 = dxy2[ix, iy][:, None] + (pz - c[2])[None, :] ** 2
        keep &= d2 <= max_distance**2
    rows, cols = np.nonzero(keep)
    positions = np.stack([px[ix[rows]], py[iy[rows]], pz[cols]], axis=1)
    return positions, order[rows, cols]


def simulate_rir(
    room: Room,
    source,
    mic,
    max_order: int | None = None,
    duration: float | None = None,
    sample_rate: int = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    images=None,
    dc_block_hz: float | None = DC_BLOCK_HZ,
) -> Rir:
    """Image-source RIR between a point source and an omni mic.

    Each image contributes ``beta**order / (4 pi r)`` at delay ``r / c``,
    realised with an 81-tap Hann-windowed sinc. ``duration`` (s) defaults
    to the room T60; images arriving later are dropped. ``images`` may carry
    precomputed ``(positions, orders)`` for the same source.

    All-positive image amplitudes pile up a slowly decaying DC offset in the
    late tail; a causal 2nd-order Butterworth high-pass at ``dc_block_hz``
    removes it (``None`` keeps the raw sum).
    """
    src = np.asarray(source, dtype=np.float64)
    mic = np.asarray(mic, dtype=np.float64)
    if not room.contains(src):
        raise ValueError(f"source {src.tolist()} outside room")
    if not room.contains(mic):
        raise ValueError(f"mic {mic.tolist()} outside room")
    if np.allclose(src, mic):
        raise ValueError("source and mic coincide")
    if max_order is None:
        max_order = default_max_order(room, c)
    if duration is None:
        duration = room.t60
    n_taps = int(math.ceil(duration * sample_rate))
    beta = room.reflection_coefficient

    if images is None:
        images = image_sources(room, src, max_order, max_distance=duration * c + 1.0, center=mic)
    positions, orders = images
    diff = positions - mic
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    delays = dist * (sample_rate / c)
    keep = (orders <= max_order) & (delays < n_taps)
    delays, dist, orders = delays[keep], dist[keep], orders[keep]
    amps = beta ** np.arange(max(int(orders.max(initial=0)), 0) + 1)
    amps = amps[orders] / (4.0 * np.pi * dist)

    taps = np.zeros(n_taps)
    kernels.accumulate_arrivals(taps, delays, amps)
    if dc_block_hz:
        taps = sosfilt(_dc_block(dc_block_hz, sample_rate), taps)
    direct = float(np.linalg.norm(src - mic) / c * sample_rate)
    return Rir(taps, sample_rate, direct, delays, amps, orders)


@functools.lru_cache(maxsize=8)
def _dc_block(cutoff: float, sample_rate: int):
    return butter(2, cutoff, "high", fs=sample_rate, output="sos")


def schroeder_t60(taps: np.ndarray, sample_rate: int, fit_range_db=T60_FIT_RANGE_DB) -> float:
    """Reverberation time from a line fit to the backward-integrated decay curve."""
    energy = np.cumsum(taps[::-1] ** 2)[::-1]
    edc = 10.0 * np.log10(np.maximum(energy / energy[0], 1e-300))
    hi, lo = fit_range_db
    i0 = int(np.argmax(edc <= hi))
    i1 = int(np.argmax(edc <= lo))
    if i1 <= i0:
        raise ValueError("decay curve does not span the fit range")
    t = np.arange(i0, i1) / sample_rate
    slope, _ = np.polyfit(t, edc[i0:i1], 1)
    return -60.0 / slope


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------


class SceneSamplingError(RuntimeError):
    pass


def sector_bounds(index: int) -> tuple[float, float]:
    lo, hi = SECTOR_SPAN_DEG
    width = (hi - lo) / N_INTERFERERS
    return lo + index * width, lo + (index + 1) * width


def _draw_source(rng, room, probe, draw, tries: int = SOURCE_RETRIES):
    for _ in range(tries):
        spec = draw()
        if room.contains(probe.source_position(spec), SOURCE_WALL_MARGIN):
            return spec
    return None


def _place_sources(rng: np.random.Generator, room: Room, geometry: MicArray):
    """Pose, target and interferers; ``None`` if a source cannot be placed."""
    pose = ArrayPose(
        (
            rng.uniform(WALL_CLEARANCE_M, room.length - WALL_CLEARANCE_M),
            rng.uniform(WALL_CLEARANCE_M, room.width - WALL_CLEARANCE_M),
            ARRAY_HEIGHT_M,
        ),
        rng.uniform(0.0, 2.0 * np.pi),
    )
    probe = Scene(room, pose, geometry, SourceSpec(0.0, 0.0, ARRAY_HEIGHT_M), ())
    # the pose allows 1 m wall clearance and r_s reaches 1 m, so r_s is
    # redrawn until the target clears the wall margin
    target = _draw_source(
        rng, room, probe, lambda: SourceSpec(0.0, rng.uniform(*TARGET_DISTANCE_RANGE), ARRAY_HEIGHT_M)
    )
    if target is None:
        return None
    interferers = []
    for k in range(N_INTERFERERS):
        lo, hi = sector_bounds(k)

        def draw():
            height = rng.normal(INTERFERER_HEIGHT_MEAN, INTERFERER_HEIGHT_STD)
            height = float(np.clip(height, HEIGHT_CLEARANCE, room.height - HEIGHT_CLEARANCE))
            return SourceSpec(rng.uniform(lo, hi), rng.uniform(*INTERFERER_DISTANCE_RANGE), height)

        spec = _draw_source(rng, room, probe, draw)
        if spec is None:
            return None
        interferers.append(spec)
    return pose, target, interferers


def sample_scene(
    rng: np.random.Generator,
    geometry: MicArray,
    utterance_ids=None,
    seed: int | None = None,
) -> Scene:
    """Draw room, pose, target and five interferers.

    ``utterance_ids``, when given, is a pool from which six distinct
    utterances are drawn for the target and interferers.
    """
    for _ in range(MAX_RETRIES):
        room = Room(
            rng.uniform(*ROOM_LENGTH_RANGE),
            rng.uniform(*ROOM_WIDTH_RANGE),
            rng.uniform(*ROOM_HEIGHT_RANGE),
            rng.uniform(*T60_RANGE),
        )
        if sabine_absorption(room) < 1.0:
            break
    else:
        raise SceneSamplingError(f"no feasible room/T60 draw (seed={seed})")

    for _ in range(MAX_RETRIES):
        placed = _place_sources(rng, room, geometry)
        if placed is not None:
            pose, target, interferers = placed
            break
    else:
        raise SceneSamplingError(f"could not place all sources inside the room (seed={seed})")

    if utterance_ids is not None:
        pool = list(utterance_ids)
        if len(pool) < 1 + N_INTERFERERS:
            raise ValueError(f"need at least {1 + N_INTERFERERS} utterances, corpus has {len(pool)}")
        picks = rng.choice(len(pool), size=1 + N_INTERFERERS, replace=False)
        ids = [pool[i] for i in picks]
        target = SourceSpec(target.azimuth_deg, target.distance, target.height, ids[0])
        interferers = [
            SourceSpec(s.azimuth_deg, s.distance, s.height, uid) for s, uid in zip(interferers, ids[1:])
        ]
    return Scene(room, pose, geometry, target, tuple(interferers), NOISE_SNR_DB, seed)


def target_world_direction(scene: Scene) -> np.ndarray:
    return world_forward(scene.array, scene.pose)


@dataclass
class Rendered:
    mixture: AudioBuffer  # [L, n]
    target_image: AudioBuffer  # [L, n], the reverberant target at each mic
    target_direct: AudioBuffer  # [L, n], direct path only
    noise: np.ndarray
    source_images: list[np.ndarray]


def _harmonise(signal: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    m = min(n, signal.shape[-1])
    out[:m] = signal[:m]
    return out


def render_sources(scene: Scene, signals, max_order: int | None = None, duration: float | None = None):
    """Per-source multichannel images ``[L, n]`` (RIR convolution, truncated to the target length)."""
    mics = scene.mic_positions()
    n = len(signals[0])
    room = scene.room
    if max_order is None:
        max_order = default_max_order(room)
    if duration is None:
        duration = room.t60
    reach = duration * SPEED_OF_SOUND + float(np.max(np.linalg.norm(mics - mics.mean(0), axis=1))) + 1.0
    images_out = []
    for spec, sig in zip(scene.sources, signals):
        sig = _harmonise(np.asarray(sig, dtype=np.float64), n)
        pos = scene.source_position(spec)
        imgs = image_sources(room, pos, max_order, max_distance=reach, center=mics.mean(0))
        chans = np.zeros((len(mics), n))
        if np.any(sig):
            for ell, mic in enumerate(mics):
                rir = simulate_rir(room, pos, mic, max_order, duration, images=imgs)
                chans[ell] = fftconvolve(sig, rir.taps)[:n]
        images_out.append(chans)
    return images_out


def direct_path_images(scene: Scene, signal) -> np.ndarray:
    """Anechoic (order-0) target image at every mic."""
    mics = scene.mic_positions()
    sig = np.asarray(signal, dtype=np.float64)
    n = len(sig)
    pos = scene.source_position(scene.target)
    out = np.zeros((len(mics), n))
    for ell, mic in enumerate(mics):
        dist = float(np.linalg.norm(pos - mic))
        delay = dist / SPEED_OF_SOUND * SAMPLE_RATE
        taps = np.zeros(int(math.ceil(delay)) + kernels._ism_py.HALF_WIDTH + 2)
        kernels.accumulate_arrivals(taps, np.array([delay]), np.array([1.0 / (4.0 * np.pi * dist)]))
        out[ell] = fftconvolve(sig, taps)[:n]
    return out


def render_mixture(
    scene: Scene,
    utterances,
    max_order: int | None = None,
    noise_rng: np.random.Generator | None = None,
    duration: float | None = None,
) -> Rendered:
    """Convolve every source with its RIRs and add white sensor noise.

    ``utterances`` is a sequence of 1-D signals (target first). Noise is
    scaled so the channel-averaged target-image power sits ``noise_snr_db``
    above the channel-averaged noise power; ``inf`` disables it.
    """
    signals = [u.samples[0] if isinstance(u, AudioBuffer) else np.asarray(u, dtype=np.float64) for u in utterances]
    if len(signals) != len(scene.sources):
        raise ValueError(f"expected {len(scene.sources)} utterances, got {len(signals)}")
    if not np.any(signals[0]):
        raise ValueError("zero-power target")
    images = render_sources(scene, signals, max_order, duration)
    target = images[0]
    p_target = float(np.mean(target**2))
    if p_target <= 0:
        raise ValueError("zero-power target")
    if math.isinf(scene.noise_snr_db):
        noise = np.zeros_like(target)
    else:
        if noise_rng is None:
            noise_rng = np.random.default_rng(np.random.SeedSequence([scene.seed or 0, 0x5E5]))
        noise = noise_rng.standard_normal(target.shape)
        noise *= math.sqrt(p_target / 10 ** (scene.noise_snr_db / 10) / np.mean(noise**2))
    mixture = np.sum(images, axis=0) + noise
    direct = direct_path_images(scene, _harmonise(signals[0], target.shape[1]))
    return Rendered(
        AudioBuffer(mixture),
        AudioBuffer(target),
        AudioBuffer(direct),
        noise,
        images,
    )
