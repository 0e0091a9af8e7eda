"""Compiled inner loop of the randomized blockwise proximal gradient solver.

Kept free of Python objects so numba can cache the compilation; all
randomness (the block visit sequence) is pre-drawn by the caller.
"""

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_DIVERGED = 1


@njit(cache=True)
def rbpg_loop(
    R,
    RT,
    g,
    lam,
    starts,
    ends,
    lips,
    seq,
    accelerate,
    shrink,
    step_scale,
    tol,
    check_every,
    refresh_every,
    max_backtracks,
):
    """Run block proximal-gradient iterations; returns (gamma, trace, iters, converged, status).

    State kept incrementally: v = R @ gamma, l1 = sum |gamma_l|. The momentum
    difference gamma - gamma_prev is nonzero only on the block updated last,
    so it is tracked as (block index, previous values) instead of a full copy.
    RT is the transposed copy of R for cache-friendly column access.
    """
    n, width = R.shape
    total = seq.shape[0]
    maxblock = 0
    for j in range(starts.shape[0]):
        size = ends[j] - starts[j]
        if size > maxblock:
            maxblock = size

    gamma = np.zeros(width, np.complex128)
    v = np.zeros(n, np.complex128)
    vprev = np.zeros(n, np.complex128)
    u = np.empty(n, np.complex128)
    resid_new = np.empty(n, np.complex128)
    grad = np.empty(maxblock, np.complex128)
    yblk = np.empty(maxblock, np.complex128)
    zblk = np.empty(maxblock, np.complex128)
    oldblk = np.empty(maxblock, np.complex128)
    last_block = -1

    obj = 0.0
    for i in range(n):
        obj += g[i].real * g[i].real + g[i].imag * g[i].imag
    l1 = 0.0
    trace = np.empty(total + 1)
    trace[0] = obj
    check_ref = obj
    t_cur = 1.0
    iters = 0
    converged = False
    status = STATUS_OK

    for k in range(total):
        blk = seq[k]
        a = starts[blk]
        b = ends[blk]
        size = b - a

        if accelerate:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_cur * t_cur))
            omega = (t_cur - 1.0) / t_next
            t_cur = t_next
        else:
            omega = 0.0

        # residual at the extrapolated point y and its data term f(y)
        fy = 0.0
        for i in range(n):
            ui = v[i] + omega * (v[i] - vprev[i]) - g[i]
            u[i] = ui
            fy += ui.real * ui.real + ui.imag * ui.imag

        # block gradient 2 * R_b^H (R y - g)
        for p in range(size):
            col = a + p
            acc = 0.0 + 0.0j
            for i in range(n):
                acc += np.conj(RT[col, i]) * u[i]
            grad[p] = 2.0 * acc

        # extrapolated block of y (differs from gamma only on the last-updated block)
        for p in range(size):
            yblk[p] = gamma[a + p]
        if omega != 0.0 and blk == last_block:
            for p in range(size):
                yblk[p] = yblk[p] + omega * (yblk[p] - oldblk[p])

        alpha = step_scale / lips[blk]
        for _ in range(max_backtracks):
            thr = alpha * lam
            lin = 0.0
            quad = 0.0
            for p in range(size):
                w = yblk[p] - alpha * grad[p]
                mag = math.sqrt(w.real * w.real + w.imag * w.imag)
                if mag <= thr:
                    z = 0.0 + 0.0j
                else:
                    z = w * (1.0 - thr / mag)
                zblk[p] = z
                d = z - yblk[p]
                lin += grad[p].real * d.real + grad[p].imag * d.imag
                quad += d.real * d.real + d.imag * d.imag
            fnew = 0.0
            for i in range(n):
                s = u[i]
                for p in range(size):
                    s += R[i, a + p] * (zblk[p] - yblk[p])
                resid_new[i] = s
                fnew += s.real * s.real + s.imag * s.imag
            if fnew <= fy + lin + quad / (2.0 * alpha) + 1e-12 * (1.0 + abs(fy)):
                break
            alpha *= shrink

        # commit: gamma keeps its other blocks, block `blk` moves to the prox point
        for i in range(n):
            vprev[i] = v[i]
        if size == width:
            # the accepted residual is R @ z - g already
            for i in range(n):
                v[i] = resid_new[i] + g[i]
            l1 = 0.0
            for p in range(size):
                oldblk[p] = gamma[p]
                gamma[p] = zblk[p]
                l1 += math.sqrt(zblk[p].real * zblk[p].real + zblk[p].imag * zblk[p].imag)
        else:
            for p in range(size):
                col = a + p
                old = gamma[col]
                oldblk[p] = old
                delta = zblk[p] - old
                if delta != 0.0:
                    for i in range(n):
                        v[i] += RT[col, i] * delta
                l1 += math.sqrt(zblk[p].real * zblk[p].real + zblk[p].imag * zblk[p].imag) - math.sqrt(old.real * old.real + old.imag * old.imag)
                gamma[col] = zblk[p]
        last_block = blk

        if refresh_every > 0 and (k + 1) % refresh_every == 0:
            # periodic recompute kills incremental rounding drift
            for i in range(n):
                acc = 0.0 + 0.0j
                for col in range(width):
                    acc += R[i, col] * gamma[col]
                v[i] = acc
            l1 = 0.0
            for col in range(width):
                l1 += math.sqrt(gamma[col].real * gamma[col].real + gamma[col].imag * gamma[col].imag)

        fval = 0.0
        for i in range(n):
            d = v[i] - g[i]
            fval += d.real * d.real + d.imag * d.imag
        new_obj = fval + lam * l1
        if not math.isfinite(new_obj):
            status = STATUS_DIVERGED
            iters = k + 1
            trace[k + 1] = new_obj
            break
        if new_obj > obj:
            t_cur = 1.0  # momentum restart
        obj = new_obj
        trace[k + 1] = obj
        iters = k + 1

        if (k + 1) % check_every == 0:
            denom = abs(check_ref)
            if denom < 1e-30:
                denom = 1e-30
            if abs(check_ref - obj) / denom < tol:
                converged = True
                break
            check_ref = obj

    return gamma, trace[: iters + 1], iters, converged, status
