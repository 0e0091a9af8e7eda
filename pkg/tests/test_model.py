import math

import numpy as np
import pytest

from tomosar.model import (
    AcquisitionGeometry,
    ElevationGrid,
    build_steering_matrix,
    elevation_from_height,
    forward_model,
    height_from_elevation,
    height_to_phase,
    rayleigh_resolution,
    spatial_frequencies,
)


def make_geom(baselines, wavelength=0.031, slant_range=704000.0, incidence_deg=39.36):
    return AcquisitionGeometry(
        wavelength, slant_range, math.radians(incidence_deg), np.asarray(baselines, float)
    )


class TestGeometryInvariants:
    def test_rejects_nonpositive_wavelength(self):
        with pytest.raises(ValueError):
            make_geom([0.0, 100.0], wavelength=0.0)

    def test_rejects_single_baseline(self):
        with pytest.raises(ValueError):
            make_geom([0.0])

    def test_rejects_zero_aperture(self):
        with pytest.raises(ValueError):
            make_geom([50.0, 50.0, 50.0])

    def test_rejects_bad_incidence(self):
        with pytest.raises(ValueError):
            make_geom([0.0, 100.0], incidence_deg=0.0)
        with pytest.raises(ValueError):
            make_geom([0.0, 100.0], incidence_deg=90.0)


class TestSpatialFrequencies:
    def test_zero_baseline_gives_zero(self):
        geom = make_geom([0.0, 100.0])
        assert spatial_frequencies(geom)[0] == 0.0

    def test_value_direct_arithmetic(self):
        # xi = 2*100 / (0.031 * 704000) = 200 / 21824
        geom = make_geom([0.0, 100.0])
        expected = 200.0 / 21824.0
        assert spatial_frequencies(geom)[1] == pytest.approx(expected, rel=1e-14)

    def test_odd_symmetry(self):
        geom_pos = make_geom([0.0, 73.5])
        geom_neg = make_geom([0.0, -73.5])
        assert spatial_frequencies(geom_pos)[1] == -spatial_frequencies(geom_neg)[1]


class TestRayleighResolution:
    def test_table_values(self):
        # lambda * r / (2 * delta_b) with the TerraSAR-X-like constants
        geom = make_geom([0.0, 254.07])
        expected = 0.031 * 704000.0 / (2.0 * 254.07)
        assert rayleigh_resolution(geom) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(42.95, abs=0.01)

    def test_inverse_proportionality(self):
        r1 = rayleigh_resolution(make_geom([0.0, 120.0]))
        r2 = rayleigh_resolution(make_geom([0.0, 240.0]))
        assert r1 == pytest.approx(2.0 * r2, rel=1e-12)

    def test_zero_aperture_rejected_at_construction(self):
        with pytest.raises(ValueError):
            make_geom([10.0, 10.0])


class TestElevationGrid:
    def test_rejects_nonuniform(self):
        with pytest.raises(ValueError):
            ElevationGrid(np.array([0.0, 1.0, 2.5]))

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            ElevationGrid(np.array([0.0, -1.0, -2.0]))

    def test_uniform_properties(self):
        grid = ElevationGrid.uniform(-10.0, 30.0, 81)
        assert grid.spacing == pytest.approx(0.5)
        assert grid.extent == pytest.approx(40.0)
        assert len(grid) == 81

    def test_default_grid_sizing(self):
        geom = make_geom(np.linspace(-150, 250, 29))
        grid = ElevationGrid.default_for(geom)
        rho = rayleigh_resolution(geom)
        assert len(grid) == 4 * 29 * 4
        assert grid.samples[0] == pytest.approx(-2.0 * rho)
        assert grid.samples[-1] == pytest.approx(4.0 * rho)


class TestSteeringMatrix:
    def test_requires_overcomplete_grid(self):
        geom = make_geom([0.0, 50.0, 120.0])
        with pytest.raises(ValueError):
            build_steering_matrix(geom, ElevationGrid.uniform(-5, 5, 3))

    def test_unit_modulus_and_trivial_rows_cols(self):
        geom = make_geom([0.0, 50.0, 120.0])
        grid = ElevationGrid.uniform(-20.0, 20.0, 9)
        sm = build_steering_matrix(geom, grid)
        assert np.allclose(np.abs(sm.entries), 1.0, atol=1e-12)
        # zero-baseline row and zero-elevation column are all ones
        assert np.allclose(sm.entries[0, :], 1.0, atol=1e-12)
        zero_col = int(np.flatnonzero(grid.samples == 0.0)[0])
        assert np.allclose(sm.entries[:, zero_col], 1.0, atol=1e-12)

    def test_entries_match_elementwise_oracle(self):
        rng = np.random.default_rng(7)
        baselines = np.concatenate([[0.0], rng.uniform(-200, 200, 2)])
        geom = make_geom(baselines)
        grid = ElevationGrid.uniform(-30.0, 60.0, 5)
        sm = build_steering_matrix(geom, grid)
        for n in range(3):
            xi = 2.0 * baselines[n] / (0.031 * 704000.0)
            for l, s in enumerate(grid.samples):
                expected = complex(math.cos(2 * math.pi * xi * s), math.sin(2 * math.pi * xi * s))
                assert sm.entries[n, l] == pytest.approx(expected, abs=1e-12)

    def test_deterministic(self):
        geom = make_geom([0.0, 80.0, -40.0])
        grid = ElevationGrid.uniform(-10, 50, 7)
        a = build_steering_matrix(geom, grid).entries
        b = build_steering_matrix(geom, grid).entries
        assert np.array_equal(a, b)


class TestForwardModel:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.geom = make_geom(np.concatenate([[0.0], rng.uniform(-150, 150, 5)]))
        self.grid = ElevationGrid.uniform(-40, 80, 25)
        self.sm = build_steering_matrix(self.geom, self.grid)

    def test_zero_reflectivity(self):
        g = forward_model(self.sm, np.zeros(25, complex))
        assert np.all(g == 0)

    def test_one_hot_column(self):
        gamma = np.zeros(25, complex)
        gamma[11] = 2.0 - 1.0j
        g = forward_model(self.sm, gamma)
        assert np.allclose(g, (2.0 - 1.0j) * self.sm.entries[:, 11], atol=1e-14)

    def test_matches_naive_loop_oracle(self):
        rng = np.random.default_rng(12)
        gamma = rng.standard_normal(25) + 1j * rng.standard_normal(25)
        noise = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        g = forward_model(self.sm, gamma, noise)
        for n in range(6):
            acc = complex(0)
            for l in range(25):
                acc += self.sm.entries[n, l] * gamma[l]
            assert g[n] == pytest.approx(acc + noise[n], rel=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(5)
        g1 = rng.standard_normal(25) + 1j * rng.standard_normal(25)
        g2 = rng.standard_normal(25) + 1j * rng.standard_normal(25)
        a, b = 1.7 - 0.3j, -0.4 + 2.2j
        lhs = forward_model(self.sm, a * g1 + b * g2)
        rhs = a * forward_model(self.sm, g1) + b * forward_model(self.sm, g2)
        assert np.allclose(lhs, rhs, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward_model(self.sm, np.zeros(7, complex))
        with pytest.raises(ValueError):
            forward_model(self.sm, np.zeros(25, complex), noise=np.zeros(3, complex))


class TestHeightPhase:
    def test_zero_height(self):
        geom = make_geom([0.0, 100.0])
        assert height_to_phase(geom, 0.0, 1) == 0.0

    def test_value_direct_arithmetic(self):
        # 4*pi*100*30 / (0.031 * 704000 * sin(39.36 deg))
        geom = make_geom([0.0, 100.0])
        expected = 4.0 * math.pi * 100.0 * 30.0 / (0.031 * 704000.0 * math.sin(math.radians(39.36)))
        got = height_to_phase(geom, 30.0, 1)
        assert got == pytest.approx(expected, rel=1e-14)
        assert got == pytest.approx(2.724, abs=2e-3)

    def test_linear_in_height(self):
        geom = make_geom([0.0, 140.0])
        assert height_to_phase(geom, 44.0, 1) == pytest.approx(
            2.0 * height_to_phase(geom, 22.0, 1), rel=1e-12
        )

    def test_elevation_height_roundtrip(self):
        geom = make_geom([0.0, 100.0])
        h = 27.3
        assert height_from_elevation(geom, elevation_from_height(geom, h)) == pytest.approx(h, rel=1e-14)

    def test_consistent_with_steering_phase(self):
        # one-hot reflectivity at s = h/sin(theta) reproduces height_to_phase
        rng = np.random.default_rng(8)
        geom = make_geom(np.concatenate([[0.0], rng.uniform(-200, 200, 7)]))
        h = 30.0
        s = elevation_from_height(geom, h)
        grid = ElevationGrid(np.linspace(s - 20, s + 20, 41))  # node 20 hits s exactly
        sm = build_steering_matrix(geom, grid)
        node = int(np.argmin(np.abs(grid.samples - s)))
        gamma = np.zeros(41, complex)
        gamma[node] = 1.0
        g = forward_model(sm, gamma)
        for n in range(geom.n_acquisitions):
            expected = np.exp(1j * height_to_phase(geom, h, n))
            assert abs(np.angle(g[n] * np.conj(expected))) < 1e-10
