import math

import numpy as np
import pytest

from tomosar.crlb import (
    AccuracyQuery,
    baseline_sigma,
    crlb_double,
    crlb_single,
    interference_factor,
)


def query(**kwargs):
    defaults = dict(
        wavelength=0.031, slant_range=704000.0, sigma_b=100.0, n=29, snr=10.0
    )
    defaults.update(kwargs)
    return AccuracyQuery(**defaults)


class TestSingleBound:
    def test_reference_value(self):
        # lambda*r / (4*pi*sigma_b*sqrt(2*N*SNR)) = 21824 / (400*pi*sqrt(580))
        expected = 21824.0 / (400.0 * math.pi * math.sqrt(580.0))
        assert crlb_single(query()) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.721, abs=1e-3)

    def test_inverse_sqrt_in_product(self):
        assert crlb_single(query(n=29, snr=10.0)) == pytest.approx(
            2.0 * crlb_single(query(n=116, snr=10.0)), rel=1e-12
        )

    def test_doubling_sigma_b_halves(self):
        assert crlb_single(query(sigma_b=200.0)) == pytest.approx(
            crlb_single(query()) / 2.0, rel=1e-12
        )

    def test_product_tradeoff_exact(self):
        # sigma(N, SNR) == sigma(2N, SNR/2) with no tolerance
        a = crlb_single(query(n=20, snr=8.0))
        b = crlb_single(query(n=40, snr=4.0))
        assert a == b

    def test_validation(self):
        with pytest.raises(ValueError):
            query(snr=0.0)
        with pytest.raises(ValueError):
            query(n=1)
        with pytest.raises(ValueError):
            query(sigma_b=-1.0)


class TestInterferenceFactor:
    def test_kappa_three_any_phase(self):
        for dphi in np.linspace(-math.pi, math.pi, 17):
            assert interference_factor(3.0, dphi) == 1.0

    def test_kappa_beyond_three_clamps(self):
        assert interference_factor(3.5, 0.7) == 1.0
        assert interference_factor(10.0, -2.0) == 1.0

    def test_hand_evaluated_value(self):
        # kappa=1, dphi=0: sqrt(40*(2/3)/4) = sqrt(20/3)
        assert interference_factor(1.0, 0.0) == pytest.approx(math.sqrt(20.0 / 3.0), rel=1e-12)
        assert interference_factor(1.0, 0.0) == pytest.approx(2.582, abs=1e-3)

    def test_at_least_one(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            kappa = float(rng.uniform(0.05, 5.0))
            dphi = float(rng.uniform(-math.pi, math.pi))
            assert interference_factor(kappa, dphi) >= 1.0

    def test_independent_of_n_and_snr(self):
        # the factor takes neither N nor SNR; identical for any query pair
        assert interference_factor(1.2, 0.4) == interference_factor(1.2, 0.4)

    def test_rejects_nonpositive_kappa(self):
        with pytest.raises(ValueError):
            interference_factor(0.0, 0.0)


class TestDoubleBound:
    def test_equals_single_at_kappa_three(self):
        q = query(kappa=3.0, delta_phi=1.1)
        assert crlb_double(q) == crlb_single(q)

    def test_product_value(self):
        q = query(kappa=1.0, delta_phi=0.0)
        expected = math.sqrt(20.0 / 3.0) * crlb_single(q)
        assert crlb_double(q) == pytest.approx(expected, rel=1e-12)
        assert crlb_double(q) == pytest.approx(1.862, abs=2e-3)

    def test_never_below_single(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            q = query(kappa=float(rng.uniform(0.1, 4.0)), delta_phi=float(rng.uniform(-3, 3)))
            assert crlb_double(q) >= crlb_single(q)


class TestBaselineSigma:
    def test_sample_std(self):
        baselines = np.array([0.0, 10.0, -10.0, 20.0])
        assert baseline_sigma(baselines) == pytest.approx(np.std(baselines, ddof=1), rel=1e-14)
