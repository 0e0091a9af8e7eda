"""Quantitative evaluation of reconstructed height maps and scatterer sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .simulate import SceneSpec

__all__ = [
    "RegionMask",
    "HeightStats",
    "SeparationHistogram",
    "region_masks",
    "height_stats",
    "profile_slice",
    "normalized_distance",
    "separation_histogram",
    "detection_rate",
]


@dataclass(frozen=True)
class RegionMask:
    name: str
    mask: np.ndarray

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class HeightStats:
    region: str
    truth: float
    mean: float
    std: float
    mean_error: float
    count: int


@dataclass(frozen=True)
class SeparationHistogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int
    sr_fraction: float      # pairs below the inherent resolution (kappa < 1)
    non_sr_fraction: float


def region_masks(spec: SceneSpec, erosion: int = 0) -> list:
    """One boolean mask per named shape; rectangles sharing a name are unioned.

    Unnamed rectangles get shape1..shapeN in order of appearance. Erosion
    peels the given number of boundary pixel layers (8-connected) from each
    mask to exclude edge effects of spatial filtering.
    """
    order = []
    masks = {}
    auto = 0
    for rect in spec.rectangles:
        name = rect.name
        if name is None:
            auto += 1
            name = f"shape{auto}"
        if name not in masks:
            masks[name] = np.zeros(spec.shape, dtype=bool)
            order.append(name)
        masks[name][
            rect.origin_row : rect.origin_row + rect.rows,
            rect.origin_col : rect.origin_col + rect.cols,
        ] = True
    if erosion > 0:
        struct = np.ones((3, 3), dtype=bool)
        for name in order:
            masks[name] = ndimage.binary_erosion(masks[name], struct, iterations=erosion)
    return [RegionMask(name, masks[name]) for name in order]


def height_stats(heights: np.ndarray, truth: np.ndarray, masks, detected=None) -> list:
    """Per-region mean/std/mean-error over detected pixels (NaN = no detection)."""
    heights = np.asarray(heights, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if heights.shape != truth.shape:
        raise ValueError("height and truth maps must have the same shape")
    if detected is None:
        detected = ~np.isnan(heights)
    out = []
    for region in masks:
        sel = region.mask & detected
        count = int(sel.sum())
        if count == 0:
            raise ValueError(f"region {region.name!r} has no detected pixels")
        values = heights[sel]
        errors = values - truth[sel]
        std = float(np.std(values, ddof=1)) if count > 1 else 0.0
        out.append(
            HeightStats(
                region=region.name,
                truth=float(truth[sel].mean()),
                mean=float(values.mean()),
                std=std,
                mean_error=float(errors.mean()),
                count=count,
            )
        )
    return out


def profile_slice(heights: np.ndarray, truth: np.ndarray, row: int | None = None, col: int | None = None):
    """Extract one line of (position, height, truth) records."""
    heights = np.asarray(heights, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if (row is None) == (col is None):
        raise ValueError("give exactly one of row or col")
    if row is not None:
        if not 0 <= row < heights.shape[0]:
            raise IndexError("row out of range")
        h, t = heights[row, :], truth[row, :]
    else:
        if not 0 <= col < heights.shape[1]:
            raise IndexError("col out of range")
        h, t = heights[:, col], truth[:, col]
    out = np.empty(h.size, dtype=[("position", "<i4"), ("height", "<f8"), ("truth", "<f8")])
    out["position"] = np.arange(h.size)
    out["height"] = h
    out["truth"] = t
    return out


def normalized_distance(separation: float, rho_s: float):
    """kappa = elevation separation / rayleigh resolution."""
    if rho_s <= 0:
        raise ValueError("rho_s must be positive")
    return separation / rho_s


def separation_histogram(
    top_elevation: np.ndarray,
    ground_elevation: np.ndarray,
    khat: np.ndarray,
    rho_s: float,
    bin_width: float = 0.1,
) -> SeparationHistogram:
    """Histogram of double-scatterer separations in units of rho_s."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    double = np.asarray(khat) == 2
    kappa = np.abs(
        np.asarray(top_elevation, dtype=float)[double]
        - np.asarray(ground_elevation, dtype=float)[double]
    ) / rho_s
    kappa = kappa[np.isfinite(kappa)]
    total = kappa.size
    if total == 0:
        return SeparationHistogram(np.array([0.0]), np.array([], dtype=int), 0, 0.0, 0.0)
    nbins = max(1, int(np.ceil(kappa.max() / bin_width)))
    edges = np.arange(nbins + 1) * bin_width
    counts, _ = np.histogram(kappa, bins=edges)
    sr = float(np.mean(kappa < 1.0))
    return SeparationHistogram(edges, counts, total, sr, 1.0 - sr)


def detection_rate(
    khat: np.ndarray,
    top_elevation: np.ndarray,
    ground_elevation: np.ndarray,
    truth_top: np.ndarray,
    truth_ground: np.ndarray,
    mask: np.ndarray,
    rho_s: float,
) -> float:
    """Fraction of true-double pixels detected as K=2 with both layers within rho_s/2."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty truth mask")
    tol = rho_s / 2.0
    with np.errstate(invalid="ignore"):
        correct = (
            (np.asarray(khat) == 2)
            & (np.abs(np.asarray(top_elevation) - np.asarray(truth_top)) <= tol)
            & (np.abs(np.asarray(ground_elevation) - np.asarray(truth_ground)) <= tol)
        )
    return float(correct[mask].mean())
