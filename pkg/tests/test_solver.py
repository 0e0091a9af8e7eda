import numpy as np
import pytest

from tomosar.solver import (
    L1LsProblem,
    SolverOptions,
    block_probabilities,
    certificate_residual,
    gradient,
    lipschitz_block,
    make_blocks,
    objective,
    rbpg_solve,
    reference_solve,
    sample_blocks,
    soft_threshold,
)


def random_problem(seed, n=25, width=100, lam_factor=0.1, sparsity=3, noise=0.05):
    rng = np.random.default_rng(seed)
    matrix = (rng.standard_normal((n, width)) + 1j * rng.standard_normal((n, width))) / np.sqrt(2)
    gamma = np.zeros(width, complex)
    support = rng.choice(width, sparsity, replace=False)
    gamma[support] = rng.standard_normal(sparsity) + 1j * rng.standard_normal(sparsity)
    g = matrix @ gamma + noise * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    lam = lam_factor * float(np.abs(matrix.conj().T @ g).max())
    return L1LsProblem(matrix, g, lam)


class TestObjective:
    def test_zero_gamma(self):
        prob = random_problem(0)
        assert objective(prob, np.zeros(100, complex)) == pytest.approx(
            float(np.vdot(prob.rhs, prob.rhs).real), rel=1e-12
        )

    def test_exact_solution_residual_free(self):
        rng = np.random.default_rng(1)
        matrix = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        gamma = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        prob = L1LsProblem(matrix, matrix @ gamma, 0.0)
        assert objective(prob, gamma) == pytest.approx(0.0, abs=1e-18)

    def test_matches_naive_loops(self):
        prob = random_problem(2, n=6, width=11)
        rng = np.random.default_rng(3)
        gamma = rng.standard_normal(11) + 1j * rng.standard_normal(11)
        resid2 = 0.0
        for i in range(6):
            acc = complex(0)
            for l in range(11):
                acc += prob.matrix[i, l] * gamma[l]
            acc -= prob.rhs[i]
            resid2 += abs(acc) ** 2
        expected = resid2 + prob.lam * sum(abs(gamma[l]) for l in range(11))
        assert objective(prob, gamma) == pytest.approx(expected, rel=1e-12)


class TestGradient:
    def test_zero_at_exact_solution(self):
        rng = np.random.default_rng(4)
        matrix = rng.standard_normal((10, 10)) + 1j * rng.standard_normal((10, 10))
        gamma = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        prob = L1LsProblem(matrix, matrix @ gamma, 0.0)
        assert np.abs(gradient(prob, gamma)).max() < 1e-10

    def test_definition_on_basis_vector(self):
        prob = random_problem(5, n=7, width=9)
        zero_rhs = L1LsProblem(prob.matrix, np.zeros(7, complex), 0.0)
        e3 = np.zeros(9, complex)
        e3[3] = 1.0
        expected = 2.0 * prob.matrix.conj().T @ prob.matrix[:, 3]
        assert np.allclose(gradient(zero_rhs, e3), expected, rtol=1e-12)

    def test_finite_difference_directional_derivative(self):
        prob = random_problem(6)
        rng = np.random.default_rng(7)
        gamma = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        direction = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        direction /= np.linalg.norm(direction)

        def f(x):
            r = prob.matrix @ x - prob.rhs
            return float(np.vdot(r, r).real)

        eps = 1e-6
        numeric = (f(gamma + eps * direction) - f(gamma - eps * direction)) / (2 * eps)
        analytic = float(np.vdot(gradient(prob, gamma), direction).real)
        assert numeric == pytest.approx(analytic, rel=1e-5)


class TestSoftThreshold:
    def test_known_value(self):
        assert soft_threshold(3 + 4j, 2.0) == pytest.approx(1.8 + 2.4j, rel=1e-12)

    def test_kills_small_values(self):
        assert soft_threshold(0.5 - 0.5j, 1.0) == 0.0
        assert soft_threshold(0.0 + 0.0j, 1.0) == 0.0

    def test_identity_at_zero_tau(self):
        x = 1.3 - 2.7j
        assert soft_threshold(x, 0.0) == pytest.approx(x, rel=1e-15)

    def test_is_prox_of_complex_modulus(self):
        # compare against a fine polar grid search of 0.5|u-x|^2 + tau|u|
        rng = np.random.default_rng(8)
        for _ in range(5):
            x = complex(rng.standard_normal(), rng.standard_normal()) * 3
            tau = float(rng.uniform(0.1, 2.0))
            best = min(
                (
                    0.5 * abs(m * np.exp(1j * a) - x) ** 2 + tau * m
                    for m in np.linspace(0, 1.5 * abs(x) + 1e-12, 400)
                    for a in np.linspace(-np.pi, np.pi, 181)
                ),
            )
            z = soft_threshold(x, tau)
            value = 0.5 * abs(z - x) ** 2 + tau * abs(z)
            assert value <= best + 1e-4


class TestLipschitz:
    def test_single_steering_column(self):
        # unit-modulus column of length N: L = 2 * N
        n = 17
        col = np.exp(1j * np.linspace(0, 5, n))[:, None]
        assert lipschitz_block(col, slice(0, 1)) == pytest.approx(2 * n, rel=1e-6)

    def test_orthogonal_pair(self):
        n = 8
        matrix = np.zeros((n, 2), complex)
        matrix[:, 0] = np.exp(2j * np.pi * np.arange(n) * 0 / n)
        matrix[:, 1] = np.exp(2j * np.pi * np.arange(n) * 3 / n)
        assert lipschitz_block(matrix, slice(0, 2)) == pytest.approx(2 * n, rel=1e-5)

    def test_matches_dense_svd_oracle(self):
        rng = np.random.default_rng(9)
        matrix = rng.standard_normal((12, 30)) + 1j * rng.standard_normal((12, 30))
        expected = 2.0 * np.linalg.svd(matrix, compute_uv=False)[0] ** 2
        assert lipschitz_block(matrix, slice(None)) == pytest.approx(expected, rel=1e-5)

    def test_empty_block_rejected(self):
        with pytest.raises(ValueError):
            lipschitz_block(np.ones((3, 3), complex), slice(1, 1))


class TestBlocks:
    def test_default_block_count(self):
        starts, ends = make_blocks(100, None)
        assert len(starts) == 6
        assert starts[0] == 0 and ends[-1] == 100
        assert np.all(ends - starts >= 1)
        assert np.all(starts[1:] == ends[:-1])

    def test_probabilities_uniform(self):
        probs = block_probabilities(np.full(8, 3.7))
        assert np.allclose(probs, 1 / 8)

    def test_probabilities_value(self):
        assert np.allclose(block_probabilities(np.array([1.0, 3.0])), [0.25, 0.75])

    def test_probabilities_reject_nonpositive(self):
        with pytest.raises(ValueError):
            block_probabilities(np.array([1.0, 0.0]))

    def test_empirical_sampling_frequency(self):
        probs = np.array([0.25, 0.75])
        rng = np.random.default_rng(10)
        seq = sample_blocks(probs, 100000, rng)
        freq = np.bincount(seq, minlength=2) / seq.size
        assert np.abs(freq - probs).max() <= 0.02


class TestReferenceSolve:
    def test_trace_non_increasing(self):
        prob = random_problem(11)
        report = reference_solve(prob, 1e-8)
        diffs = np.diff(report.objective_trace)
        assert np.all(diffs <= 1e-12 * np.maximum(1.0, report.objective_trace[:-1]))

    def test_zero_rhs_is_zero_solution(self):
        rng = np.random.default_rng(12)
        matrix = rng.standard_normal((5, 9)) + 1j * rng.standard_normal((5, 9))
        prob = L1LsProblem(matrix, np.zeros(5, complex), 1.0)
        report = reference_solve(prob, 1e-10)
        assert np.all(report.solution == 0)
        assert report.iterations <= 1

    def test_unregularized_square_system(self):
        rng = np.random.default_rng(13)
        matrix = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
        matrix += 4.0 * np.eye(12)  # keep it well-conditioned
        rhs = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        prob = L1LsProblem(matrix, rhs, 0.0)
        report = reference_solve(prob, 1e-14, max_iterations=500000)
        expected = np.linalg.lstsq(matrix, rhs, rcond=None)[0]
        assert np.abs(report.solution - expected).max() < 1e-6


class TestRbpgSolve:
    def test_null_solution_threshold(self):
        prob = random_problem(14)
        lam0 = 2.0 * float(np.abs(prob.matrix.conj().T @ prob.rhs).max())
        null_prob = L1LsProblem(prob.matrix, prob.rhs, lam0)
        report = rbpg_solve(null_prob, SolverOptions())
        assert np.all(report.solution == 0)

    def test_single_scatterer_support_and_amplitude(self):
        rng = np.random.default_rng(15)
        xi = rng.uniform(-0.01, 0.01, 20)
        s = np.linspace(-40, 80, 120)
        matrix = np.exp(2j * np.pi * np.outer(xi, s))
        gamma = np.zeros(120, complex)
        gamma[70] = 1.5 * np.exp(0.7j)
        g = matrix @ gamma
        lam = 0.05 * float(np.abs(matrix.conj().T @ g).max())
        report = rbpg_solve(
            L1LsProblem(matrix, g, lam),
            SolverOptions(block_count=1, max_iterations=25000, tolerance=1e-14),
        )
        peak = int(np.abs(report.solution).argmax())
        assert peak == 70
        assert abs(report.solution[peak]) == pytest.approx(1.5, rel=0.05)

    def test_matches_reference_objective(self):
        for seed in (16, 17, 18):
            prob = random_problem(seed)
            ref = reference_solve(prob, 1e-10)
            ref_obj = objective(prob, ref.solution)
            report = rbpg_solve(prob, SolverOptions(max_iterations=60000, tolerance=1e-10, seed=seed))
            assert objective(prob, report.solution) <= ref_obj * (1 + 1e-4)
            assert certificate_residual(prob, report.solution) <= 1e-3 * prob.lam

    def test_bit_identical_for_fixed_seed(self):
        prob = random_problem(19)
        opts = SolverOptions(max_iterations=3000, seed=42)
        a = rbpg_solve(prob, opts)
        b = rbpg_solve(prob, opts)
        assert np.array_equal(a.solution, b.solution)
        assert np.array_equal(a.objective_trace, b.objective_trace)

    def test_seed_median_close_to_reference(self):
        prob = random_problem(20)
        ref_obj = objective(prob, reference_solve(prob, 1e-10).solution)
        finals = [
            objective(prob, rbpg_solve(prob, SolverOptions(max_iterations=40000, tolerance=1e-9, seed=s)).solution)
            for s in range(20)
        ]
        assert np.median(finals) <= ref_obj * (1 + 1e-4)

    def test_acceleration_flag_changes_path_not_result(self):
        prob = random_problem(21)
        on = rbpg_solve(prob, SolverOptions(max_iterations=50000, tolerance=1e-10, seed=0, acceleration=True))
        off = rbpg_solve(prob, SolverOptions(max_iterations=50000, tolerance=1e-10, seed=0, acceleration=False))
        assert objective(prob, on.solution) == pytest.approx(objective(prob, off.solution), rel=1e-4)

    def test_options_validation(self):
        with pytest.raises(ValueError):
            SolverOptions(tolerance=0.0)
        with pytest.raises(ValueError):
            SolverOptions(shrink=1.5)
        prob = random_problem(22)
        with pytest.raises(ValueError):
            rbpg_solve(prob, SolverOptions(block_count=101))
