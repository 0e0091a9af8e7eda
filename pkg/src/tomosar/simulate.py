"""Synthetic urban-like scenes and noisy multi-baseline stacks.

Scenes are flat rectangular blocks on a zero-height background. Per pixel and
acquisition the clean measurement is a unit-amplitude phasor whose phase
follows the height of the scene; circular complex Gaussian noise is added at
a prescribed SNR. With unit signal amplitude the linear SNR equals 1/sigma^2,
so snr_db maps directly to the noise variance.

Reproducibility: every random draw comes from a counter-based Philox stream
keyed by (seed, purpose, index). Baselines use one stream; pixel noise uses
one substream per pixel (row-major index), so serial and parallel generation
agree bit for bit and the mapping is stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import AcquisitionGeometry

__all__ = [
    "Rectangle",
    "SceneSpec",
    "InsarStack",
    "default_scene",
    "generate_scene",
    "baseline_distribution",
    "add_noise",
    "simulate_stack",
]

_STREAM_BASELINES = 0
_STREAM_NOISE = 1


def _stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Philox generator for one (seed, purpose, index) substream."""
    if index < 0 or index >= 1 << 48:
        raise ValueError("stream index out of range")
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) << 64 | (purpose << 48) | index
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned block of constant height, placed on the pixel grid."""

    origin_row: int
    origin_col: int
    rows: int
    cols: int
    height_m: float
    name: str | None = None

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("rectangle must have positive size")
        if self.height_m < 0:
            raise ValueError("rectangle height must be non-negative")


@dataclass(frozen=True)
class SceneSpec:
    """Scene layout: image size in pixels plus a list of rectangles.

    Later rectangles overwrite earlier ones where they overlap. ``height``
    is the number of rows, ``width`` the number of columns.
    """

    width: int
    height: int
    rectangles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rectangles", tuple(self.rectangles))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene size must be positive")
        for rect in self.rectangles:
            if rect.origin_row < 0 or rect.origin_col < 0:
                raise ValueError(f"rectangle {rect} extends outside the scene")
            if rect.origin_row + rect.rows > self.height or rect.origin_col + rect.cols > self.width:
                raise ValueError(f"rectangle {rect} extends outside the scene")

    @property
    def shape(self):
        return (self.height, self.width)


def default_scene() -> SceneSpec:
    """Urban-like 200 x 170 test scene with four building shapes.

    shape1: 30 m over 60x20 px, shape2: 25 m over 30x70 px, shape3: 40 m over
    60x60 px, shape4: 50 m composite (two 20x50 bars plus one 20x60 bar).
    """
    return SceneSpec(
        width=170,
        height=200,
        rectangles=(
            Rectangle(20, 20, 60, 20, 30.0, name="shape1"),
            Rectangle(25, 75, 30, 70, 25.0, name="shape2"),
            Rectangle(110, 15, 60, 60, 40.0, name="shape3"),
            Rectangle(105, 100, 20, 60, 50.0, name="shape4"),
            Rectangle(135, 105, 20, 50, 50.0, name="shape4"),
            Rectangle(165, 105, 20, 50, 50.0, name="shape4"),
        ),
    )


def generate_scene(spec: SceneSpec) -> np.ndarray:
    """Rasterize a scene spec into a (rows, cols) height map in meters."""
    heights = np.zeros(spec.shape, dtype=float)
    for rect in spec.rectangles:
        heights[
            rect.origin_row : rect.origin_row + rect.rows,
            rect.origin_col : rect.origin_col + rect.cols,
        ] = rect.height_m
    return heights


@dataclass(frozen=True)
class InsarStack:
    """N coregistered complex images plus the acquisition geometry."""

    geometry: AcquisitionGeometry
    images: np.ndarray
    master_index: int = 0

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.complex128)
        object.__setattr__(self, "images", images)
        if images.ndim != 3:
            raise ValueError("images must be a (N, rows, cols) array")
        if images.shape[0] != self.geometry.n_acquisitions:
            raise ValueError("image count does not match baseline count")
        if not 0 <= self.master_index < images.shape[0]:
            raise ValueError("master_index out of range")

    @property
    def shape(self):
        return self.images.shape


def baseline_distribution(n: int, seed: int, sigma_b: float = 100.0) -> np.ndarray:
    """Draw n pseudo-random baselines from N(0, sigma_b^2); the master (index 0) is 0."""
    if n < 2:
        raise ValueError("need at least two acquisitions")
    rng = _stream(seed, _STREAM_BASELINES)
    baselines = rng.standard_normal(n) * sigma_b
    baselines[0] = 0.0
    return baselines


def add_noise(clean: InsarStack, snr_db: float | None, seed: int) -> InsarStack:
    """Add i.i.d. circular complex Gaussian noise for a unit-amplitude signal.

    Linear SNR is 10**(snr_db/10) and the total noise variance per sample is
    its inverse, split evenly between real and imaginary parts. snr_db of
    None or +inf returns the input unchanged.
    """
    if snr_db is None or np.isinf(snr_db):
        return InsarStack(clean.geometry, clean.images.copy(), clean.master_index)
    sigma2 = 10.0 ** (-snr_db / 10.0)
    scale = np.sqrt(sigma2 / 2.0)
    n, rows, cols = clean.shape
    noisy = clean.images.copy()
    flat = noisy.reshape(n, rows * cols)
    for pixel in range(rows * cols):
        draws = _stream(seed, _STREAM_NOISE, pixel).standard_normal(2 * n)
        flat[:, pixel] += scale * (draws[0::2] + 1j * draws[1::2])
    return InsarStack(clean.geometry, noisy, clean.master_index)


def simulate_stack(
    heights: np.ndarray,
    geom: AcquisitionGeometry,
    snr_db: float | None = None,
    seed: int = 0,
    master_index: int = 0,
) -> InsarStack:
    """Simulate a stack from a height map: unit phasors at the height-induced phase.

    Per pixel and acquisition, phase = 4*pi*b_n*h / (wavelength*range*sin(incidence)),
    then noise per ``add_noise``.
    """
    heights = np.asarray(heights, dtype=float)
    if heights.ndim != 2:
        raise ValueError("height map must be 2-D")
    factor = 4.0 * np.pi * geom.baselines / (
        geom.wavelength * geom.slant_range * np.sin(geom.incidence_angle)
    )
    phases = factor[:, None, None] * heights[None, :, :]
    clean = InsarStack(geom, np.exp(1j * phases), master_index)
    return add_noise(clean, snr_db, seed)
