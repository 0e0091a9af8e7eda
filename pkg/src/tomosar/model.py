"""Multi-baseline SAR imaging geometry and the discrete forward model.

A stack of N coregistered acquisitions with cross-track baselines b_n sees
the scene's reflectivity along elevation s through an irregularly sampled
Fourier mapping: each acquisition measures

    g_n = sum_l gamma(s_l) * exp(j * 2*pi * xi_n * s_l),   xi_n = 2*b_n / (lambda * r)

All inversion happens on the elevation axis; height above ground relates to
elevation through h = s * sin(incidence_angle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AcquisitionGeometry",
    "ElevationGrid",
    "SteeringMatrix",
    "spatial_frequencies",
    "rayleigh_resolution",
    "build_steering_matrix",
    "forward_model",
    "height_to_phase",
    "elevation_from_height",
    "height_from_elevation",
]

_GRID_UNIFORM_RTOL = 1e-12


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Acquisition parameters shared by every image of a stack.

    wavelength and slant_range in meters, incidence_angle in radians,
    baselines a length-N vector of perpendicular baselines in meters.
    """

    wavelength: float
    slant_range: float
    incidence_angle: float
    baselines: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.baselines, dtype=float)
        object.__setattr__(self, "baselines", b)
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.slant_range <= 0:
            raise ValueError("slant_range must be positive")
        if not 0.0 < self.incidence_angle < math.pi / 2:
            raise ValueError("incidence_angle must lie in (0, pi/2)")
        if b.ndim != 1 or b.size < 2:
            raise ValueError("need at least two baselines")
        if b.max() - b.min() <= 0.0:
            raise ValueError("baselines must not all be equal (zero aperture)")

    @property
    def n_acquisitions(self) -> int:
        return self.baselines.size

    @property
    def aperture(self) -> float:
        """Total baseline spread max(b) - min(b) in meters."""
        return float(self.baselines.max() - self.baselines.min())


@dataclass(frozen=True)
class ElevationGrid:
    """Uniformly spaced elevation sampling s_l, l = 1..L, in meters."""

    samples: np.ndarray
    spacing: float = field(init=False)
    extent: float = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("grid needs at least two samples")
        steps = np.diff(s)
        if np.any(steps <= 0):
            raise ValueError("grid samples must be strictly increasing")
        spacing = float(steps[0])
        if np.any(np.abs(steps - spacing) > _GRID_UNIFORM_RTOL * abs(spacing)):
            raise ValueError("grid spacing is not uniform")
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "extent", float(s[-1] - s[0]))

    def __len__(self) -> int:
        return self.samples.size

    @classmethod
    def uniform(cls, start: float, stop: float, count: int) -> "ElevationGrid":
        return cls(np.linspace(start, stop, count))

    @classmethod
    def default_for(
        cls,
        geom: AcquisitionGeometry,
        oversampling: int = 4,
        low_factor: float = -2.0,
        high_factor: float = 4.0,
    ) -> "ElevationGrid":
        """Default inversion grid: [low, high] * rayleigh resolution, L = 4*N*oversampling.

        The asymmetric default extent keeps room for elevated returns (facades)
        above the ground level while oversampling the inherent resolution.
        """
        rho = rayleigh_resolution(geom)
        count = 4 * geom.n_acquisitions * oversampling
        return cls.uniform(low_factor * rho, high_factor * rho, count)


@dataclass(frozen=True)
class SteeringMatrix:
    """N x L mapping from gridded reflectivity to stack measurements."""

    entries: np.ndarray
    geometry: AcquisitionGeometry
    grid: ElevationGrid

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.complex128)
        object.__setattr__(self, "entries", e)
        if e.shape != (self.geometry.n_acquisitions, len(self.grid)):
            raise ValueError("entries shape does not match geometry/grid")

    @property
    def shape(self):
        return self.entries.shape


def spatial_frequencies(geom: AcquisitionGeometry) -> np.ndarray:
    """Elevation spatial frequency xi_n = 2*b_n / (wavelength * range), in 1/m."""
    return 2.0 * geom.baselines / (geom.wavelength * geom.slant_range)


def rayleigh_resolution(geom: AcquisitionGeometry) -> float:
    """Inherent elevation resolution rho_s = wavelength * range / (2 * aperture), in m."""
    db = geom.aperture
    if db <= 0.0:
        raise ValueError("zero baseline aperture: elevation resolution undefined")
    return geom.wavelength * geom.slant_range / (2.0 * db)


def build_steering_matrix(geom: AcquisitionGeometry, grid: ElevationGrid) -> SteeringMatrix:
    """Build R with R[n, l] = exp(j * 2*pi * xi_n * s_l).

    Requires an overcomplete grid (L > N); every entry has unit modulus.
    """
    if len(grid) <= geom.n_acquisitions:
        raise ValueError("elevation grid must be overcomplete (L > N)")
    xi = spatial_frequencies(geom)
    phase = 2.0 * np.pi * np.outer(xi, grid.samples)
    return SteeringMatrix(np.exp(1j * phase), geom, grid)


def forward_model(matrix, gamma: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
    """Measurement vector g = R @ gamma (+ noise when given)."""
    entries = matrix.entries if isinstance(matrix, SteeringMatrix) else np.asarray(matrix)
    gamma = np.asarray(gamma, dtype=np.complex128)
    if gamma.shape != (entries.shape[1],):
        raise ValueError(f"gamma has shape {gamma.shape}, expected ({entries.shape[1]},)")
    g = entries @ gamma
    if noise is not None:
        noise = np.asarray(noise, dtype=np.complex128)
        if noise.shape != g.shape:
            raise ValueError(f"noise has shape {noise.shape}, expected {g.shape}")
        g = g + noise
    return g


def height_to_phase(geom: AcquisitionGeometry, h: float, n: int) -> float:
    """Interferometric phase of a scatterer at height h seen by acquisition n.

    phi = 4*pi*b_n*h / (wavelength * range * sin(incidence)); identical to the
    steering phase 2*pi*xi_n*s at elevation s = h / sin(incidence).
    """
    b = geom.baselines[n]
    return 4.0 * math.pi * b * h / (
        geom.wavelength * geom.slant_range * math.sin(geom.incidence_angle)
    )


def elevation_from_height(geom: AcquisitionGeometry, h):
    """Elevation of a scatterer at height h above ground: s = h / sin(incidence)."""
    return h / math.sin(geom.incidence_angle)


def height_from_elevation(geom: AcquisitionGeometry, s):
    """Height above ground of a scatterer at elevation s: h = s * sin(incidence)."""
    return s * math.sin(geom.incidence_angle)
