"""Non-local filtering of interferometric stacks.

For every pixel, patch-similarity weights are derived from the joint
likelihood of interferometric observations (intensity pair + phase) under
pilot parameter estimates, aggregated over all master-slave pairs of the
stack. The weights feed a weighted maximum-likelihood estimate of phase,
coherence and variance, and the filtered measurement is the weighted mean
of the complex samples per acquisition, which shares those weights.

Phase convention: the interferometric phase of a sample pair is
phi = -arg(g1 * conj(g2)), matching the weighted phase estimate
psi = -arg(sum w * g1 * conj(g2)).

The image is processed in tiles whose halos extend the core by
search_radius + patch_radius. All per-pixel arithmetic accumulates in a
fixed order that does not depend on array extents, so tiled and untiled
runs produce bit-identical results on core pixels regardless of tile size
or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .simulate import InsarStack

__all__ = [
    "NlParams",
    "WmleField",
    "Tile",
    "pair_likelihood",
    "patch_weight",
    "wmle",
    "equivalent_looks",
    "partition_tiles",
    "filter_stack",
]

_LOG_16PI2 = math.log(16.0 * math.pi**2)
_MU_CLAMP = 1.0 - 1e-6
_SIGMA_FLOOR = 1e-300
_LOGW_CAP = 700.0  # exp() overflow guard for the standalone weight op


@dataclass(frozen=True)
class NlParams:
    """Filter geometry and selectivity.

    patch_radius: half-size of the similarity patch (patch is 2r+1 square).
    search_radius: half-size of the candidate search window.
    h: filtering parameter scaling the log-likelihood exponent; larger is
    more permissive averaging.
    """

    patch_radius: int = 3
    search_radius: int = 10
    h: float = 12.0

    def __post_init__(self):
        if self.patch_radius < 1:
            raise ValueError("patch_radius must be >= 1")
        if self.search_radius < self.patch_radius:
            raise ValueError("search_radius must be >= patch_radius")
        if self.h <= 0:
            raise ValueError("h must be positive")


@dataclass
class WmleField:
    """Weighted MLE parameter fields.

    psi, mu: per master-slave pair, shape (N-1, rows, cols).
    sigma2: per-pixel variance pooled over pairs; enl: per-pixel equivalent
    number of looks of the weight distribution.
    """

    psi: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    enl: np.ndarray


@dataclass(frozen=True)
class Tile:
    """Core output region plus the halo needed to compute it."""

    core_rows: tuple
    core_cols: tuple
    halo_rows: tuple
    halo_cols: tuple


def pair_likelihood(i1, i2, phi, psi, mu, sigma2):
    """Joint density of one interferometric observation (I1, I2, phi).

    p = exp(-(I1 + I2 - 2*sqrt(I1*I2)*mu*cos(phi - psi)) / (2*sigma2*(1-mu^2)))
        / (16*pi^2*sigma2^2*(1-mu^2))
    """
    i1 = np.asarray(i1, dtype=float)
    i2 = np.asarray(i2, dtype=float)
    if np.any(i1 < 0) or np.any(i2 < 0):
        raise ValueError("intensities must be non-negative")
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(mu < 0) or np.any(mu >= 1):
        raise ValueError("coherence must lie in [0, 1)")
    if np.any(sigma2 <= 0):
        raise ValueError("variance must be positive")
    decorr = 1.0 - mu * mu
    expo = -(i1 + i2 - 2.0 * np.sqrt(i1 * i2) * mu * np.cos(np.asarray(phi) - psi)) / (
        2.0 * sigma2 * decorr
    )
    value = np.exp(expo) / (16.0 * np.pi**2 * sigma2**2 * decorr)
    return float(value) if np.ndim(value) == 0 else value


def _log_pair_likelihood(i1, i2, phi, psi, mu, sigma2):
    decorr = 1.0 - mu * mu
    return (
        -_LOG_16PI2
        - 2.0 * np.log(sigma2)
        - np.log(decorr)
        - (i1 + i2 - 2.0 * np.sqrt(i1 * i2) * mu * np.cos(phi - psi)) / (2.0 * sigma2 * decorr)
    )


def patch_weight(
    center_g1,
    center_g2,
    cand_g1,
    cand_g2,
    pilot_psi,
    pilot_mu,
    pilot_sigma2,
    params: NlParams,
    full_size: int | None = None,
) -> float:
    """Similarity weight between two congruent patches of one image pair.

    Both patches' observations are scored under the center patch's pilot
    parameters, so the weight is symmetric in the data and any asymmetry
    comes only from the pilot choice. The log-likelihood sum is scaled by
    full_size/len(patch) when the patch was clipped at an image border and
    by 1/h, then exponentiated; non-finite likelihoods give weight 0.
    """
    center_g1 = np.asarray(center_g1, dtype=np.complex128).ravel()
    center_g2 = np.asarray(center_g2, dtype=np.complex128).ravel()
    cand_g1 = np.asarray(cand_g1, dtype=np.complex128).ravel()
    cand_g2 = np.asarray(cand_g2, dtype=np.complex128).ravel()
    if not (center_g1.size == center_g2.size == cand_g1.size == cand_g2.size):
        raise ValueError("patches must be congruent")
    psi = np.broadcast_to(np.asarray(pilot_psi, dtype=float).ravel(), center_g1.shape)
    mu = np.clip(np.broadcast_to(np.asarray(pilot_mu, dtype=float).ravel(), center_g1.shape), 0.0, _MU_CLAMP)
    sigma2 = np.maximum(
        np.broadcast_to(np.asarray(pilot_sigma2, dtype=float).ravel(), center_g1.shape), _SIGMA_FLOOR
    )

    total = 0.0
    for g1, g2 in ((cand_g1, cand_g2), (center_g1, center_g2)):
        i1 = np.abs(g1) ** 2
        i2 = np.abs(g2) ** 2
        phi = -np.angle(g1 * np.conj(g2))
        total += float(np.sum(_log_pair_likelihood(i1, i2, phi, psi, mu, sigma2)))
    if not np.isfinite(total):
        return 0.0
    scale = 1.0 if full_size is None else full_size / center_g1.size
    return float(np.exp(min(scale * total / params.h, _LOGW_CAP)))


def wmle(weights, g1, g2):
    """Weighted MLE of (psi, mu, sigma2) for one image pair.

    psi = -arg(sum w g1 conj(g2)),
    mu  = 2 sum w |g1||g2| / sum w (|g1|^2 + |g2|^2),
    sigma2 = sum w (|g1|^2 + |g2|^2) / (4 sum w).
    """
    weights = np.asarray(weights, dtype=float).ravel()
    g1 = np.asarray(g1, dtype=np.complex128).ravel()
    g2 = np.asarray(g2, dtype=np.complex128).ravel()
    wsum = weights.sum()
    if wsum <= 0:
        raise ValueError("weights must have positive sum")
    cross = np.sum(weights * (g1 * np.conj(g2)))
    a1 = np.abs(g1)
    a2 = np.abs(g2)
    power = np.sum(weights * (a1 * a1 + a2 * a2))
    psi = -float(np.angle(cross))
    mu = float(2.0 * np.sum(weights * (a1 * a2)) / power) if power > 0 else 0.0
    sigma2 = float(power / (4.0 * wsum))
    return psi, mu, sigma2


def equivalent_looks(weights) -> float:
    """(sum w)^2 / sum w^2; the count of nonzero weights when all are equal."""
    weights = np.asarray(weights, dtype=float).ravel()
    wsum = weights.sum()
    if wsum <= 0:
        raise ValueError("weights must have positive sum")
    return float(wsum * wsum / np.sum(weights * weights))


def partition_tiles(rows: int, cols: int, params: NlParams, tile_size: int | None) -> list:
    """Split an image into disjoint core tiles with clipped halos.

    Cores partition the image exactly; halos extend each core by
    search_radius + patch_radius per side, clipped at image borders, and
    contain every pixel the filter can touch when producing the core.
    """
    if tile_size is None:
        tile_size = max(rows, cols)
    if tile_size < 1:
        raise ValueError("tile_size must be >= 1")
    reach = params.search_radius + params.patch_radius
    tiles = []
    for r0 in range(0, rows, tile_size):
        r1 = min(r0 + tile_size, rows)
        for c0 in range(0, cols, tile_size):
            c1 = min(c0 + tile_size, cols)
            tiles.append(
                Tile(
                    core_rows=(r0, r1),
                    core_cols=(c0, c1),
                    halo_rows=(max(0, r0 - reach), min(rows, r1 + reach)),
                    halo_cols=(max(0, c0 - reach), min(cols, c1 + reach)),
                )
            )
    return tiles


def _shift_add(dst, src, dr, dc):
    """dst[i, j] += src[i + dr, j + dc] where both indices are in range."""
    rows, cols = dst.shape[-2], dst.shape[-1]
    r0, r1 = max(0, -dr), min(rows, rows - dr)
    c0, c1 = max(0, -dc), min(cols, cols - dc)
    if r0 >= r1 or c0 >= c1:
        return
    dst[..., r0:r1, c0:c1] += src[..., r0 + dr : r1 + dr, c0 + dc : c1 + dc]


def _box_sum(arr, radius, row_buf):
    """Separable (2r+1)^2 clipped box sum with a per-pixel fixed add order."""
    row_buf.fill(0)
    for dr in range(-radius, radius + 1):
        _shift_add(row_buf, arr, dr, 0)
    out = np.zeros_like(row_buf)
    for dc in range(-radius, radius + 1):
        _shift_add(out, row_buf, 0, dc)
    return out


def _axis_counts(length, radius, delta):
    """Number of in-range patch offsets per position along one axis."""
    x = np.arange(length)
    lo = np.maximum(np.maximum(-radius, -x), -x - delta)
    hi = np.minimum(np.minimum(radius, length - 1 - x), length - 1 - x - delta)
    return np.maximum(hi - lo + 1, 0)


def _pilot(pair_d, pair_power, radius=1):
    """Boxcar MLE pilot per pair: phase phasor, coherence, variance fields.

    The pilot coherence is the joint-MLE magnitude 2|sum d| / sum(I1+I2),
    which estimates the actual channel correlation (the amplitude-only form
    of the final WMLE output saturates near pi/4 for independent channels
    and would over-sharpen the likelihood at low SNR).
    """
    p, rows, cols = pair_d.shape
    counts = np.outer(_axis_counts(rows, radius, 0), _axis_counts(cols, radius, 0))
    row_bufc = np.zeros((p, rows, cols), dtype=np.complex128)
    row_buff = np.zeros((p, rows, cols), dtype=float)
    sum_d = _box_sum(pair_d, radius, row_bufc)
    sum_power = _box_sum(pair_power, radius, row_buff)
    mag = np.abs(sum_d)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(sum_power > 0, 2.0 * mag / np.where(sum_power > 0, sum_power, 1.0), 0.0)
        cosp = np.where(mag > 0, sum_d.real / np.where(mag > 0, mag, 1.0), 0.0)
        sinp = np.where(mag > 0, sum_d.imag / np.where(mag > 0, mag, 1.0), 0.0)
    mu = np.clip(mu, 0.0, _MU_CLAMP)
    sigma2 = np.maximum(sum_power / (4.0 * counts), _SIGMA_FLOOR)
    return mu, sigma2, cosp, sinp


def _observables(images: np.ndarray, master: int):
    """Per-pair interferometric observables; d = conj(g1) g2 so arg(d) = phi."""
    slaves = [k for k in range(images.shape[0]) if k != master]
    g1 = images[master]
    pair_d = np.conj(g1)[None] * images[slaves]
    i1 = (g1.real * g1.real + g1.imag * g1.imag)[None]
    i2 = images[slaves].real ** 2 + images[slaves].imag ** 2
    return pair_d, i1 + i2


def _likelihood_coefficients(pair_d, pair_power):
    """Pilot-based per-pixel coefficients of the pair log-likelihood.

    For data x at pixel q scored under the pilot of pixel r,
    log p(x_q | theta_r) = logC(r) - inv(r)*S(q) + CR(r)*Re d(q) + CI(r)*Im d(q).
    Computed once for the full image so tiles see identical pilot values.
    """
    mu, sigma2, cosp, sinp = _pilot(pair_d, pair_power)
    decorr = 1.0 - mu * mu
    inv = 1.0 / (2.0 * sigma2 * decorr)
    coef_re = 2.0 * mu * inv * cosp
    coef_im = 2.0 * mu * inv * sinp
    return inv, coef_re, coef_im


def _filter_block(images, pair_d, pair_power, inv, coef_re, coef_im, params: NlParams):
    """Filter one block (full image or tile halo). Returns filtered block + fields.

    All inputs are sliced to the block. Pixels closer than search+patch to a
    non-border block edge get values that differ from the full-image result;
    callers must crop to the core.
    """
    n, rows, cols = images.shape
    p = pair_d.shape[0]
    pair_absd = np.abs(pair_d)

    radius = params.patch_radius
    reach = params.search_radius
    full_patch = (2 * radius + 1) ** 2
    offsets = [
        (dr, dc)
        for dr in range(-reach, reach + 1)
        for dc in range(-reach, reach + 1)
        if (dr, dc) != (0, 0)
    ]

    # pass 1: per-offset patch log-weights, tracking the per-pixel maximum.
    # The per-sample score is the symmetrized log-likelihood ratio of the
    # cross fits against the self fits,
    #   l = log p(x_s|t_c) + log p(x_c|t_s) - log p(x_s|t_s) - log p(x_c|t_c)
    #     = (inv_s - inv_c)(S_s - S_c) + (CR_c - CR_s)(Re d_s - Re d_c)
    #       + (CI_c - CI_s)(Im d_s - Im d_c),
    # which cancels the candidate-independent normalizers and, crucially, the
    # common-mode intensity noise that swamps phase similarity at low SNR.
    row_counts = {d: _axis_counts(rows, radius, d) for d in range(-reach, reach + 1)}
    col_counts = {d: _axis_counts(cols, radius, d) for d in range(-reach, reach + 1)}
    logw = np.full((len(offsets), rows, cols), -np.inf)
    row_buf = np.zeros((rows, cols))
    for o, (dr, dc) in enumerate(offsets):
        r0, r1 = max(0, -dr), min(rows, rows - dr)
        c0, c1 = max(0, -dc), min(cols, cols - dc)
        if r0 >= r1 or c0 >= c1:
            continue
        dst = (slice(None), slice(r0, r1), slice(c0, c1))
        src = (slice(None), slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
        level = np.zeros((rows, cols))
        level[r0:r1, c0:c1] = (
            np.einsum("prc,prc->rc", inv[src] - inv[dst], pair_power[src] - pair_power[dst])
            + np.einsum("prc,prc->rc", coef_re[dst] - coef_re[src], pair_d.real[src] - pair_d.real[dst])
            + np.einsum("prc,prc->rc", coef_im[dst] - coef_im[src], pair_d.imag[src] - pair_d.imag[dst])
        )
        sums = _box_sum(level, radius, row_buf)
        counts = np.outer(row_counts[dr], col_counts[dc])
        # h is a per-pair setting: aggregating p pairs scales the divisor to h*p,
        # keeping the filter selectivity independent of stack size
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = np.where(counts > 0, sums * (full_patch / (params.h * p)) / np.where(counts > 0, counts, 1), -np.inf)
        lw[np.isnan(lw)] = -np.inf
        logw[o] = lw

    shift = logw.max(axis=0)
    shift = np.where(np.isfinite(shift), shift, 0.0)

    # pass 2: weighted accumulation; the self weight equals the best candidate
    # weight (1 after the shift), so w_sum starts at 1
    w_sum = np.ones((rows, cols))
    w_sq = np.ones((rows, cols))
    filt_acc = np.zeros((n, rows, cols), dtype=np.complex128)
    d_acc = pair_d.copy()
    absd_acc = pair_absd.copy()
    power_acc = pair_power.copy()
    for o, (dr, dc) in enumerate(offsets):
        w = np.exp(logw[o] - shift)
        r0, r1 = max(0, -dr), min(rows, rows - dr)
        c0, c1 = max(0, -dc), min(cols, cols - dc)
        if r0 >= r1 or c0 >= c1:
            continue
        wv = w[r0:r1, c0:c1]
        dst = (slice(None), slice(r0, r1), slice(c0, c1))
        src = (slice(None), slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
        w_sum[r0:r1, c0:c1] += wv
        w_sq[r0:r1, c0:c1] += wv * wv
        filt_acc[dst] += wv * (images[src] - images[dst])
        d_acc[dst] += wv * pair_d[src]
        absd_acc[dst] += wv * pair_absd[src]
        power_acc[dst] += wv * pair_power[src]

    filtered = images + filt_acc / w_sum
    # psi = -arg(sum w g1 g2*) = arg(sum w conj(g1) g2)
    psi = np.angle(d_acc)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_out = np.where(power_acc > 0, 2.0 * absd_acc / np.where(power_acc > 0, power_acc, 1.0), 0.0)
    mu_out = np.clip(mu_out, 0.0, 1.0)
    sigma2_out = power_acc.sum(axis=0) / (4.0 * p * w_sum)
    enl = w_sum * w_sum / w_sq
    return filtered, psi, mu_out, sigma2_out, enl


def filter_stack(
    stack: InsarStack,
    params: NlParams = NlParams(),
    tile_size: int | None = None,
    workers: int = 1,
):
    """Non-local filter of a full stack; returns (filtered InsarStack, WmleField).

    tile_size of None processes the image as a single tile. Any tile size or
    worker count yields bit-identical output.
    """
    n, rows, cols = stack.shape
    if n < 2:
        raise ValueError("need at least two acquisitions to filter")
    tiles = partition_tiles(rows, cols, params, tile_size)
    filtered = np.empty_like(stack.images)
    psi = np.empty((n - 1, rows, cols))
    mu = np.empty((n - 1, rows, cols))
    sigma2 = np.empty((rows, cols))
    enl = np.empty((rows, cols))

    # pilot pass over the full image; tiles slice these shared read-only fields
    pair_d, pair_power = _observables(stack.images, stack.master_index)
    inv, coef_re, coef_im = _likelihood_coefficients(pair_d, pair_power)

    def run(tile: Tile):
        hr0, hr1 = tile.halo_rows
        hc0, hc1 = tile.halo_cols
        halo = (slice(None), slice(hr0, hr1), slice(hc0, hc1))
        f, ps, m, s2, e = _filter_block(
            np.ascontiguousarray(stack.images[halo]),
            np.ascontiguousarray(pair_d[halo]),
            np.ascontiguousarray(pair_power[halo]),
            np.ascontiguousarray(inv[halo]),
            np.ascontiguousarray(coef_re[halo]),
            np.ascontiguousarray(coef_im[halo]),
            params,
        )
        r0, r1 = tile.core_rows
        c0, c1 = tile.core_cols
        rs = slice(r0 - hr0, r1 - hr0)
        cs = slice(c0 - hc0, c1 - hc0)
        filtered[:, r0:r1, c0:c1] = f[:, rs, cs]
        psi[:, r0:r1, c0:c1] = ps[:, rs, cs]
        mu[:, r0:r1, c0:c1] = m[:, rs, cs]
        sigma2[r0:r1, c0:c1] = s2[rs, cs]
        enl[r0:r1, c0:c1] = e[rs, cs]

    if workers <= 1:
        for tile in tiles:
            run(tile)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, tiles))

    out = InsarStack(stack.geometry, filtered, stack.master_index)
    return out, WmleField(psi=psi, mu=mu, sigma2=sigma2, enl=enl)
