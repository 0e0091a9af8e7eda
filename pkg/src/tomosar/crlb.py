"""Closed-form elevation estimation accuracy bounds.

The single-scatterer bound depends on the acquisition count and SNR only
through their product, which is the tradeoff that motivates raising SNR by
filtering instead of flying more passes. For two interfering scatterers the
bound is inflated by a correction factor depending on their normalized
distance and phase difference, but not on N or SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AccuracyQuery",
    "crlb_single",
    "interference_factor",
    "crlb_double",
    "baseline_sigma",
]


@dataclass(frozen=True)
class AccuracyQuery:
    """Inputs of the accuracy bounds; snr is linear, delta_phi in radians."""

    wavelength: float
    slant_range: float
    sigma_b: float
    n: int
    snr: float
    kappa: float = 3.0
    delta_phi: float = 0.0

    def __post_init__(self):
        if min(self.wavelength, self.slant_range, self.sigma_b) <= 0:
            raise ValueError("wavelength, slant_range and sigma_b must be positive")
        if self.n < 2:
            raise ValueError("need at least two acquisitions")
        if self.snr <= 0:
            raise ValueError("snr must be positive (linear units)")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


def baseline_sigma(baselines) -> float:
    """Sample standard deviation of a baseline vector."""
    return float(np.std(np.asarray(baselines, dtype=float), ddof=1))


def crlb_single(query: AccuracyQuery) -> float:
    """Single-scatterer elevation bound: lambda*r / (4*pi*sigma_b*sqrt(2*N*SNR))."""
    return query.wavelength * query.slant_range / (
        4.0 * math.pi * query.sigma_b * math.sqrt(2.0 * query.n * query.snr)
    )


def interference_factor(kappa: float, delta_phi: float) -> float:
    """Accuracy inflation for two scatterers at normalized distance kappa.

    c0 = max(sqrt(40*kappa^-2*(1-kappa/3) / (9 - 6*(3-2k)*cos(2*dphi) + (3-2k)^2)), 1);
    the numerator is non-positive for kappa >= 3, where the factor clamps to 1.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    numerator = 40.0 * kappa**-2 * (1.0 - kappa / 3.0)
    if numerator <= 0.0:
        return 1.0
    q = 3.0 - 2.0 * kappa
    denominator = 9.0 - 6.0 * q * math.cos(2.0 * delta_phi) + q * q
    if denominator == 0.0:
        raise ZeroDivisionError("degenerate scatterer configuration")
    return max(math.sqrt(numerator / denominator), 1.0)


def crlb_double(query: AccuracyQuery) -> float:
    """Two-scatterer elevation bound: interference factor times the single bound."""
    return interference_factor(query.kappa, query.delta_phi) * crlb_single(query)
