import math

import numpy as np
import pytest

from tomosar.model import AcquisitionGeometry, height_to_phase
from tomosar.simulate import (
    InsarStack,
    Rectangle,
    SceneSpec,
    add_noise,
    baseline_distribution,
    default_scene,
    generate_scene,
    simulate_stack,
)


def make_geom(n=5, seed=1):
    return AcquisitionGeometry(
        0.031, 704000.0, math.radians(39.36), baseline_distribution(n, seed, 100.0)
    )


class TestScene:
    def test_default_scene_layout(self):
        spec = default_scene()
        heights = generate_scene(spec)
        assert heights.shape == (200, 170)
        # four shapes at the documented heights, sizes from the layout
        assert np.sum(heights == 30.0) == 60 * 20
        assert np.sum(heights == 25.0) == 30 * 70
        assert np.sum(heights == 40.0) == 60 * 60
        assert np.sum(heights == 50.0) == 20 * 60 + 2 * 20 * 50
        assert np.sum(heights == 0.0) == heights.size - (1200 + 2100 + 3600 + 3200)

    def test_empty_scene(self):
        assert np.all(generate_scene(SceneSpec(width=12, height=9)) == 0.0)

    def test_full_frame_rectangle(self):
        spec = SceneSpec(10, 8, (Rectangle(0, 0, 8, 10, 10.0),))
        assert np.all(generate_scene(spec) == 10.0)

    def test_later_rectangle_overwrites(self):
        spec = SceneSpec(10, 10, (Rectangle(0, 0, 10, 10, 5.0), Rectangle(2, 2, 3, 3, 9.0)))
        heights = generate_scene(spec)
        assert heights[3, 3] == 9.0
        assert heights[0, 0] == 5.0

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            SceneSpec(10, 10, (Rectangle(5, 5, 6, 3, 1.0),))
        with pytest.raises(ValueError):
            SceneSpec(10, 10, (Rectangle(0, 0, 1, 1, -2.0),))


class TestBaselines:
    def test_deterministic(self):
        a = baseline_distribution(29, 7, 100.0)
        b = baseline_distribution(29, 7, 100.0)
        assert np.array_equal(a, b)

    def test_master_is_zero(self):
        assert baseline_distribution(5, 3, 50.0)[0] == 0.0

    def test_sample_std_near_sigma(self):
        baselines = baseline_distribution(29, 7, 100.0)
        assert np.std(baselines[1:], ddof=1) == pytest.approx(100.0, rel=0.25)

    def test_different_seeds_differ(self):
        assert not np.array_equal(baseline_distribution(10, 1, 100.0), baseline_distribution(10, 2, 100.0))

    def test_minimum_count(self):
        with pytest.raises(ValueError):
            baseline_distribution(1, 0, 100.0)


class TestNoise:
    def test_infinite_snr_is_identity(self):
        geom = make_geom()
        clean = simulate_stack(np.full((6, 5), 10.0), geom, None, 0)
        for snr in (None, float("inf")):
            noisy = add_noise(clean, snr, 99)
            assert np.array_equal(noisy.images, clean.images)

    def test_noise_power_at_zero_db(self):
        # E|eps|^2 = 10^(-snr/10) = 1; Monte-Carlo over >= 1e5 samples
        geom = make_geom(n=12)
        clean = InsarStack(geom, np.zeros((12, 100, 100), complex))
        noisy = add_noise(clean, 0.0, 4)
        power = np.mean(np.abs(noisy.images) ** 2)
        assert power == pytest.approx(1.0, rel=0.05)

    def test_noise_power_follows_snr(self):
        geom = make_geom(n=10)
        clean = InsarStack(geom, np.zeros((10, 80, 80), complex))
        noisy = add_noise(clean, 7.0, 5)
        assert np.mean(np.abs(noisy.images) ** 2) == pytest.approx(10 ** -0.7, rel=0.05)

    def test_seed_determinism_and_variation(self):
        geom = make_geom()
        clean = simulate_stack(np.zeros((4, 4)), geom, None, 0)
        a = add_noise(clean, 3.0, 1).images
        b = add_noise(clean, 3.0, 1).images
        c = add_noise(clean, 3.0, 2).images
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestSimulateStack:
    def test_flat_scene_no_noise_is_ones(self):
        geom = make_geom()
        stack = simulate_stack(np.zeros((7, 9)), geom, None, 0)
        assert np.allclose(stack.images, 1.0, atol=0)

    def test_unit_amplitude_without_noise(self):
        geom = make_geom()
        stack = simulate_stack(np.random.default_rng(0).uniform(0, 50, (6, 6)), geom, None, 0)
        assert np.allclose(np.abs(stack.images), 1.0, atol=1e-12)

    def test_phases_match_height_to_phase(self):
        geom = make_geom(n=8, seed=3)
        h = 30.0
        stack = simulate_stack(np.array([[h]]), geom, None, 0)
        for n in range(8):
            expected = np.exp(1j * height_to_phase(geom, h, n))
            assert stack.images[n, 0, 0] == pytest.approx(expected, abs=1e-12)

    def test_full_determinism(self):
        geom = make_geom()
        hm = np.zeros((5, 5))
        hm[1:3, 2:4] = 25.0
        a = simulate_stack(hm, geom, 3.0, 17).images
        b = simulate_stack(hm, geom, 3.0, 17).images
        assert np.array_equal(a, b)

    def test_stack_validation(self):
        geom = make_geom(n=4)
        with pytest.raises(ValueError):
            InsarStack(geom, np.zeros((3, 2, 2), complex))
        with pytest.raises(ValueError):
            InsarStack(geom, np.zeros((4, 2, 2), complex), master_index=9)
