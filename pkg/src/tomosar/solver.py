"""Complex-valued L1-regularized least squares solvers.

Minimizes ||R @ gamma - g||_2^2 + lam * sum_l |gamma_l| for complex gamma.
The workhorse is a randomized blockwise proximal gradient method (RBPG):
contiguous coordinate blocks are visited with probability proportional to
their Lipschitz constants, each visit applies one proximal gradient step
with backtracking line search, and Nesterov extrapolation is applied on top
with a restart whenever the objective increases.

``reference_solve`` is a deliberately plain monotone proximal-gradient
solver with full gradients, used as the comparison oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _rbpg
from .model import SteeringMatrix

__all__ = [
    "L1LsProblem",
    "SolverOptions",
    "SolverReport",
    "NumericalError",
    "objective",
    "gradient",
    "soft_threshold",
    "make_blocks",
    "lipschitz_block",
    "block_probabilities",
    "sample_blocks",
    "certificate_residual",
    "rbpg_solve",
    "reference_solve",
]


class NumericalError(RuntimeError):
    """Divergence or non-convergence of an iterative numerical routine."""


def _as_matrix(matrix) -> np.ndarray:
    if isinstance(matrix, SteeringMatrix):
        matrix = matrix.entries
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D")
    return matrix


@dataclass(frozen=True)
class L1LsProblem:
    """One instance: matrix (N x L), right-hand side g (N), penalty lam >= 0."""

    matrix: np.ndarray
    rhs: np.ndarray
    lam: float

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        rhs = np.asarray(self.rhs, dtype=np.complex128)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "rhs", rhs)
        if rhs.shape != (m.shape[0],):
            raise ValueError("rhs length does not match matrix rows")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")


@dataclass(frozen=True)
class SolverOptions:
    block_count: int | None = None  # default max(1, L // 16)
    max_iterations: int = 20000
    tolerance: float = 1e-8
    seed: int = 0
    shrink: float = 0.5
    step_scale: float = 1.0
    acceleration: bool = True
    check_every: int | None = None  # default: one epoch (J block visits)
    refresh_every: int = 512
    max_backtracks: int = 60

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.block_count is not None and self.block_count < 1:
            raise ValueError("block_count must be >= 1")


@dataclass
class SolverReport:
    solution: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool


def objective(problem: L1LsProblem, gamma: np.ndarray) -> float:
    """||R gamma - g||_2^2 + lam * sum |gamma_l| (complex moduli)."""
    gamma = np.asarray(gamma, dtype=np.complex128)
    resid = problem.matrix @ gamma - problem.rhs
    return float(np.vdot(resid, resid).real + problem.lam * np.abs(gamma).sum())


def gradient(problem: L1LsProblem, gamma: np.ndarray) -> np.ndarray:
    """Gradient of the data term: 2 R^H (R gamma - g)."""
    gamma = np.asarray(gamma, dtype=np.complex128)
    return 2.0 * (problem.matrix.conj().T @ (problem.matrix @ gamma - problem.rhs))


def soft_threshold(x, tau: float):
    """Complex soft threshold x * max(1 - tau/|x|, 0); exact prox of tau*|.|."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    x = np.asarray(x, dtype=np.complex128)
    mag = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(mag > tau, 1.0 - tau / np.where(mag > 0, mag, 1.0), 0.0)
    out = x * factor
    if out.ndim == 0:
        return complex(out)
    return out


def make_blocks(width: int, block_count: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous near-equal index ranges; returns (starts, ends) arrays."""
    if block_count is None:
        block_count = max(1, width // 16)
    if not 1 <= block_count <= width:
        raise ValueError("block count must lie in [1, L]")
    bounds = np.linspace(0, width, block_count + 1).round().astype(np.int64)
    return bounds[:-1].copy(), bounds[1:].copy()


def lipschitz_block(matrix, block: slice | np.ndarray, rtol: float = 1e-6, max_iter: int = 10000) -> float:
    """Lipschitz constant of the block gradient: 2 * sigma_max(R_block)^2.

    Power iteration on R_b^H R_b from a fixed pseudo-random start, run to the
    requested relative tolerance.
    """
    m = _as_matrix(matrix)
    sub = m[:, block]
    if sub.ndim == 1:
        sub = sub[:, None]
    if sub.shape[1] == 0:
        raise ValueError("empty block")
    rng = np.random.default_rng(0x5EED)
    x = rng.standard_normal(sub.shape[1]) + 1j * rng.standard_normal(sub.shape[1])
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(max_iter):
        z = sub @ x
        est = float(np.vdot(z, z).real)  # Rayleigh quotient for unit x
        w = sub.conj().T @ z
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0  # zero block
        x = w / norm
        if abs(est - prev) <= rtol * max(est, 1e-300):
            return 2.0 * est
        prev = est
    raise NumericalError("power iteration did not converge")


def block_probabilities(lipschitz_constants: np.ndarray) -> np.ndarray:
    """Sampling distribution P_j = L_j / sum(L) over blocks."""
    lips = np.asarray(lipschitz_constants, dtype=float)
    if np.any(lips <= 0):
        raise ValueError("all Lipschitz constants must be positive")
    return lips / lips.sum()


def sample_blocks(probabilities: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an i.i.d. block index sequence by inverse-CDF sampling."""
    cdf = np.cumsum(probabilities)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(count), side="right").astype(np.int64)


def certificate_residual(problem: L1LsProblem, gamma: np.ndarray) -> float:
    """Max distance of -grad_l to lam * (subdifferential of |gamma_l|).

    Zero at an exact minimizer; tests require <= 1e-3 * lam at convergence.
    """
    gamma = np.asarray(gamma, dtype=np.complex128)
    grad = gradient(problem, gamma)
    mag = np.abs(gamma)
    on = mag > 0
    res = np.empty(gamma.shape, dtype=float)
    res[on] = np.abs(-grad[on] - problem.lam * gamma[on] / mag[on])
    res[~on] = np.maximum(np.abs(grad[~on]) - problem.lam, 0.0)
    return float(res.max(initial=0.0))


def _block_lipschitz_all(matrix: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    return np.array(
        [lipschitz_block(matrix, slice(int(a), int(b))) for a, b in zip(starts, ends)]
    )


def rbpg_solve(problem: L1LsProblem, options: SolverOptions = SolverOptions()) -> SolverReport:
    """Randomized blockwise proximal gradient with Nesterov acceleration.

    Blocks are sampled i.i.d. with probability proportional to their
    Lipschitz constants; each visit backtracks the step from 1/L_block until
    the sufficient-decrease condition holds. Stops when the relative
    objective change over one epoch falls below ``options.tolerance``.
    Fully deterministic for a fixed seed.
    """
    matrix, g = problem.matrix, problem.rhs
    width = matrix.shape[1]
    starts, ends = make_blocks(width, options.block_count)
    lips = _block_lipschitz_all(matrix, starts, ends)
    if np.any(lips <= 0):
        raise NumericalError("zero-norm block; problem is degenerate")
    probs = block_probabilities(lips)
    rng = np.random.default_rng(options.seed)
    seq = sample_blocks(probs, options.max_iterations, rng)
    check_every = options.check_every if options.check_every is not None else len(starts)

    contiguous = np.ascontiguousarray(matrix)
    gamma, trace, iters, converged, status = _rbpg.rbpg_loop(
        contiguous,
        np.ascontiguousarray(contiguous.T),
        np.ascontiguousarray(g),
        float(problem.lam),
        starts,
        ends,
        lips,
        seq,
        bool(options.acceleration),
        float(options.shrink),
        float(options.step_scale),
        float(options.tolerance),
        int(check_every),
        int(options.refresh_every),
        int(options.max_backtracks),
    )
    if status == _rbpg.STATUS_DIVERGED:
        raise NumericalError("rbpg_solve diverged: objective became non-finite")
    return SolverReport(gamma, trace, iters, converged)


def reference_solve(
    problem: L1LsProblem,
    tolerance: float = 1e-10,
    max_iterations: int = 200000,
) -> SolverReport:
    """Plain monotone proximal gradient (full gradient, no momentum, no randomness).

    New iterates are only accepted when the objective does not increase, so
    the reported trace is non-increasing by construction.
    """
    matrix, g, lam = problem.matrix, problem.rhs, problem.lam
    lip = lipschitz_block(matrix, slice(None))
    if lip <= 0:
        raise NumericalError("zero matrix")
    gamma = np.zeros(matrix.shape[1], dtype=np.complex128)
    obj = objective(problem, gamma)
    trace = [obj]
    converged = False
    iters = 0
    for k in range(max_iterations):
        resid = matrix @ gamma - g
        fval = float(np.vdot(resid, resid).real)
        grad = 2.0 * (matrix.conj().T @ resid)
        alpha = 1.0 / lip
        accepted = False
        for _ in range(80):
            z = soft_threshold(gamma - alpha * grad, alpha * lam)
            delta = z - gamma
            zres = matrix @ delta + resid
            fnew = float(np.vdot(zres, zres).real)
            decrease_ok = fnew <= fval + float(
                np.vdot(grad, delta).real
            ) + float(np.vdot(delta, delta).real) / (2.0 * alpha) + 1e-12 * (1.0 + abs(fval))
            new_obj = fnew + lam * float(np.abs(z).sum())
            if decrease_ok and new_obj <= obj:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True  # numerical floor: no acceptable decrease left
            break
        gamma = z
        iters = k + 1
        trace.append(new_obj)
        if not np.isfinite(new_obj):
            raise NumericalError("reference_solve diverged")
        rel = abs(obj - new_obj) / max(abs(obj), 1e-30)
        obj = new_obj
        if rel < tolerance:
            converged = True
            break
    if not converged:
        raise NumericalError("reference_solve hit the iteration cap before tolerance")
    return SolverReport(gamma, np.asarray(trace), iters, converged)


def pipeline_solver_options(base: SolverOptions, seed: int) -> SolverOptions:
    """Per-pixel options: same settings, pixel-specific seed."""
    return replace(base, seed=seed)
