import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import arrivals

from hybridse.geometry import nominal_array0
from hybridse.room import (
    INTERFERER_DISTANCE_RANGE,
    Room,
    Scene,
    default_max_order,
    image_sources,
    matched_reflection,
    reflection_from_t60,
    render_mixture,
    sabine_absorption,
    sample_scene,
    schroeder_t60,
    sector_bounds,
    simulate_rir,
)

SR = 16000


class TestAbsorption:
    def test_sabine_example(self):
        assert sabine_absorption(Room(4, 6, 3, 0.5)) == pytest.approx(0.1611 * 72 / (108 * 0.5))
        assert sabine_absorption(Room(4, 6, 3, 0.5)) == pytest.approx(0.2148, abs=1e-4)

    def test_doubling_t60_halves_alpha(self):
        assert sabine_absorption(Room(4, 6, 3, 0.2)) == pytest.approx(2 * sabine_absorption(Room(4, 6, 3, 0.4)))

    def test_reflection(self):
        room = Room(4, 6, 3, 0.5, absorption="sabine")
        assert room.reflection_coefficient == pytest.approx(math.sqrt(1 - 0.1611 * 72 / 54))

    def test_infeasible(self):
        with pytest.raises(ValueError, match="infeasible T60"):
            reflection_from_t60(Room(2.5, 3.0, 2.2, 0.05))
        with pytest.raises(ValueError, match="infeasible T60"):
            matched_reflection(Room(2.5, 3.0, 2.2, 0.05))

    def test_sabine_rir_t60(self):
        # the worked example: 4x6x3 m, T60 0.5 s, Sabine alpha, Schroeder fit
        room = Room(4, 6, 3, 0.5, absorption="sabine")
        t60 = schroeder_t60(simulate_rir(room, (1.0, 1.5, 1.4), (2.8, 4.2, 1.6)).taps, SR)
        assert abs(t60 / 0.5 - 1) <= 0.2

    @pytest.mark.parametrize("dims,t60", [((3.0, 8.5, 2.4), 0.45), ((4.8, 3.2, 3.3), 0.25)])
    def test_matched_rir_t60(self, dims, t60):
        room = Room(*dims, t60)
        r = np.random.default_rng(5)
        vals = []
        for _ in range(3):
            src = r.uniform(0.5, 1, 3) * room.dims * 0.5
            mic = room.dims - r.uniform(0.5, 1, 3) * room.dims * 0.4
            vals.append(schroeder_t60(simulate_rir(room, src, mic).taps, SR))
        assert abs(np.mean(vals) / t60 - 1) <= 0.1

    def test_max_order_covers_duration(self):
        room = Room(4, 6, 3, 0.4)
        radius = 343 * 0.4
        n = default_max_order(room)
        # an image along each axis at the T60 radius needs fewer bounces than n
        assert all(radius / d + 1 < n for d in room.dims)


class TestImages:
    @pytest.mark.parametrize("order", [0, 1, 2, 3])
    def test_matches_mirror_enumeration(self, order):
        room, src = Room(3.7, 5.1, 2.9, 0.3), np.array([1.1, 3.9, 1.3])
        pos, orders = image_sources(room, src, order)
        from oracles import mirror_images

        ref = mirror_images(room.dims, src, order)
        got = {tuple(round(v, 9) for v in p): int(o) for p, o in zip(pos, orders)}
        assert got == ref

    def test_pruning_keeps_near_images(self):
        room, src, c = Room(3.7, 5.1, 2.9, 0.3), np.array([1.1, 3.9, 1.3]), np.array([2.0, 2.0, 1.5])
        full, fo = image_sources(room, src, 8)
        near, no = image_sources(room, src, 8, max_distance=20.0, center=c)
        keep = np.linalg.norm(full - c, axis=1) <= 20.0
        assert sorted(map(tuple, full[keep].round(9))) == sorted(map(tuple, near.round(9)))


class TestRir:
    def test_direct_path_only(self):
        room = Room(4, 5, 3, 0.3)
        rir = simulate_rir(room, (1.0, 1.0, 1.5), (1.5, 1.0, 1.5), max_order=0, dc_block_hz=None)
        assert rir.direct_path_delay == pytest.approx(0.5 / 343 * SR)
        assert rir.direct_path_delay == pytest.approx(23.32, abs=0.01)
        assert abs(int(np.argmax(np.abs(rir.taps))) - 23) <= 1
        assert len(rir.arrival_delays) == 1

    def test_first_order_count_and_times(self):
        room = Room(4, 5, 3, 0.3)
        src, mic = (1.0, 1.2, 1.4), (2.5, 3.1, 1.7)
        rir = simulate_rir(room, src, mic, max_order=1)
        assert len(rir.arrival_delays) == 7
        ref = arrivals(room.dims, src, mic, 1, room.reflection_coefficient)
        assert np.allclose(np.sort(rir.arrival_delays), [d for d, _ in ref])

    def test_inverse_distance(self):
        room = Room(8, 9, 3.5, 0.3)
        a = simulate_rir(room, (2, 2, 1.5), (3, 2, 1.5), max_order=0).arrival_amplitudes[0]
        b = simulate_rir(room, (2, 2, 1.5), (4, 2, 1.5), max_order=0).arrival_amplitudes[0]
        assert a / b == pytest.approx(2.0, rel=0.01)

    def test_onset_at_direct_delay(self):
        # delay of exactly 35 samples: nothing meaningful arrives earlier
        room = Room(4, 5, 3, 0.3)
        d = 35 * 343 / SR
        rir = simulate_rir(room, (1.0, 2.0, 1.5), (1.0 + d, 2.0, 1.5))
        first = int(np.argmax(np.abs(rir.taps) > 1e-6 * np.abs(rir.taps).max()))
        assert abs(first - rir.direct_path_delay) <= 1
        assert np.all(np.isfinite(rir.taps))

    def test_outside_room(self):
        room = Room(4, 5, 3, 0.3)
        with pytest.raises(ValueError, match="outside"):
            simulate_rir(room, (5, 1, 1), (1, 1, 1))
        with pytest.raises(ValueError, match="outside"):
            simulate_rir(room, (1, 1, 1), (1, 1, 3.5))
        with pytest.raises(ValueError):
            simulate_rir(room, (1, 1, 1), (1, 1, 1))

    @settings(max_examples=10, deadline=None)
    @given(
        st.tuples(st.floats(2.5, 5), st.floats(3, 9), st.floats(2.2, 3.5)),
        st.integers(0, 2**31 - 1),
        st.integers(0, 2),
    )
    def test_arrivals_match_oracle(self, dims, seed, order):
        room = Room(*dims, 0.3)
        r = np.random.default_rng(seed)
        src, mic = r.uniform(0.1, 0.9, 3) * room.dims, r.uniform(0.1, 0.9, 3) * room.dims
        if np.linalg.norm(src - mic) < 0.05:
            return
        rir = simulate_rir(room, src, mic, max_order=order, duration=1.0)
        ref = arrivals(room.dims, src, mic, order, room.reflection_coefficient)
        idx = np.argsort(rir.arrival_delays)
        assert len(idx) == len(ref)
        assert np.allclose(rir.arrival_delays[idx], [d for d, _ in ref], atol=1e-6)
        assert np.allclose(rir.arrival_amplitudes[idx], [a for _, a in ref], rtol=1e-9)


class TestSchroeder:
    def test_exponential_decay(self):
        t = np.arange(SR) / SR
        taps = np.exp(-3 * np.log(10) * t / 0.4) * np.random.default_rng(0).standard_normal(SR)
        assert schroeder_t60(taps, SR) == pytest.approx(0.4, rel=0.05)

    def test_too_short(self):
        with pytest.raises(ValueError):
            schroeder_t60(np.ones(10), SR)


class TestSampling:
    def test_deterministic(self):
        a = sample_scene(np.random.default_rng(9), nominal_array0(), seed=9)
        b = sample_scene(np.random.default_rng(9), nominal_array0(), seed=9)
        assert a == b

    def test_bulk_supports(self):
        arr = nominal_array0()
        for seed in range(1000):
            s = sample_scene(np.random.default_rng(seed), arr, [f"u{i}" for i in range(10)], seed=seed)
            room = s.room
            assert 2.5 <= room.length <= 5 and 3 <= room.width <= 9 and 2.2 <= room.height <= 3.5
            assert 0.2 <= room.t60 <= 0.5
            s.pose.validate(room.dims)
            assert s.target.azimuth_deg == 0.0 and 0.3 <= s.target.distance <= 1.0
            assert s.target.height == 1.5
            assert len(s.interferers) == 5
            ids = [src.utterance_id for src in s.sources]
            assert len(set(ids)) == 6
            for k, spec in enumerate(s.interferers):
                lo, hi = sector_bounds(k)
                assert lo <= spec.azimuth_deg <= hi
                assert INTERFERER_DISTANCE_RANGE[0] <= spec.distance <= INTERFERER_DISTANCE_RANGE[1]
                assert 0.2 <= spec.height <= room.height - 0.2
            for src in s.sources:
                assert room.contains(s.source_position(src))

    def test_sectors(self):
        assert [sector_bounds(k) for k in range(5)] == [
            (20, 84), (84, 148), (148, 212), (212, 276), (276, 340)
        ]

    def test_target_on_forward_axis(self):
        s = sample_scene(np.random.default_rng(3), nominal_array0())
        direction = s.source_position(s.target) - np.array(s.pose.center)
        fwd = np.array([np.cos(s.pose.yaw), np.sin(s.pose.yaw), 0.0])
        assert np.allclose(direction / np.linalg.norm(direction), fwd)

    def test_manifest_round_trip(self):
        s = sample_scene(np.random.default_rng(4), nominal_array0(), [f"u{i}" for i in range(6)], seed=4)
        assert Scene.from_dict(s.to_dict()) == s


def _short_scene(seed=11, snr=30.0):
    s = sample_scene(np.random.default_rng(seed), nominal_array0(), seed=seed)
    room = dataclasses.replace(s.room, t60=0.2)
    return dataclasses.replace(s, room=room, noise_snr_db=snr)


def _signals(n=4000, k=6, seed=0):
    r = np.random.default_rng(seed)
    return [r.standard_normal(n) for _ in range(k)]


class TestRender:
    def test_no_interference_no_noise(self):
        scene = _short_scene(snr=math.inf)
        sig = _signals()
        sig[1:] = [np.zeros(4000)] * 5
        out = render_mixture(scene, sig)
        assert np.array_equal(out.mixture.samples, out.target_image.samples)

    def test_snr(self):
        scene = _short_scene()
        sig = _signals()
        sig[1:] = [np.zeros(4000)] * 5
        out = render_mixture(scene, sig)
        snr = 10 * np.log10(np.mean(out.target_image.samples**2) / np.mean(out.noise**2))
        assert snr == pytest.approx(30.0, abs=0.1)

    def test_decomposition_and_additivity(self):
        scene = _short_scene()
        sig = _signals()
        joint = render_mixture(scene, sig)
        v = joint.mixture.samples - joint.target_image.samples
        assert np.allclose(v, np.sum(joint.source_images[1:], axis=0) + joint.noise, atol=1e-12)
        parts = np.zeros_like(v)
        for k in range(1, 6):
            solo = [sig[0]] + [s if j == k else np.zeros_like(s) for j, s in enumerate(sig[1:], start=1)]
            parts += render_mixture(scene, solo).source_images[k]
        inter = np.sum(joint.source_images[1:], axis=0)
        assert np.linalg.norm(parts - inter) <= 1e-10 * np.linalg.norm(inter)

    def test_lengths_follow_target(self):
        scene = _short_scene()
        sig = _signals()
        sig[2] = sig[2][:1000]
        sig[3] = np.concatenate([sig[3], sig[3]])
        out = render_mixture(scene, sig)
        assert out.mixture.samples.shape == (4, 4000)

    def test_zero_target(self):
        scene = _short_scene()
        sig = _signals()
        sig[0] = np.zeros(4000)
        with pytest.raises(ValueError, match="zero-power target"):
            render_mixture(scene, sig)

    def test_noise_is_seeded(self):
        scene = _short_scene()
        a, b = render_mixture(scene, _signals()), render_mixture(scene, _signals())
        assert np.array_equal(a.mixture.samples, b.mixture.samples)
        assert abs(np.corrcoef(a.noise[0], a.noise[1])[0, 1]) < 0.1
