import warnings

import numpy as np
import pytest

from cmsre import (
    CodingConfig,
    ConvergenceError,
    SparseCode,
    ViewMatrix,
    build_neighbor_index,
    code_objective,
    oracle_code,
    solve_code,
    solve_view_codes,
)


def grid_best_objective(x, n1, n2, gamma):
    """Independent 1-D grid oracle for two-neighbor problems.

    Scans weight pairs (t, 1-t) for t in [-2, 3] at step 1e-5 and returns the
    smallest penalized objective found.
    """
    t = np.arange(-2.0, 3.0 + 1e-5, 1e-5)
    diff = n1 - n2
    base = x - n2
    residual_sq = (
        base @ base - 2.0 * t * (base @ diff) + t * t * (diff @ diff)
    )
    objective = residual_sq + gamma * (np.abs(t) + np.abs(1.0 - t))
    return float(objective.min())


def constrained_least_squares(x, neighbors):
    """Independent sum-to-one least-squares solution via the stationarity system."""
    k = neighbors.shape[1]
    G = neighbors.T @ neighbors
    c = neighbors.T @ x
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * G
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([2.0 * c, [1.0]])
    return np.linalg.solve(kkt, rhs)[:k]


class TestSolveCode:
    def test_single_neighbor_forced_to_one(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=5)
        weights = solve_code(x, rng.normal(size=(5, 1)))
        assert np.array_equal(weights, [1.0])

    def test_exact_match_takes_all_mass(self):
        rng = np.random.default_rng(1)
        neighbors = rng.normal(size=(6, 3))
        x = neighbors[:, 0].copy()
        config = CodingConfig(gamma=1e-4)
        weights = solve_code(x, neighbors, config)
        assert np.allclose(weights, [1.0, 0.0, 0.0], atol=1e-5)
        assert abs(code_objective(x, neighbors, weights, config) - 1e-4) < 1e-9

    def test_midpoint_matches_grid_oracle(self):
        # expected objective frozen from the grid oracle: the optimum sits at
        # t = 0.5 with zero residual, leaving only gamma * 1.0 = 0.01
        n1 = np.array([0.0, 0.0])
        n2 = np.array([2.0, 2.0])
        x = 0.5 * (n1 + n2)
        config = CodingConfig(gamma=0.01)
        weights = solve_code(x, np.column_stack([n1, n2]), config)
        solver_objective = code_objective(x, np.column_stack([n1, n2]), weights, config)
        grid_objective = grid_best_objective(x, n1, n2, 0.01)
        assert solver_objective <= grid_objective + 1e-6
        assert abs(solver_objective - 0.01) < 1e-6

    def test_random_two_neighbor_instances_match_grid(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n1, n2, x = rng.normal(size=(3, 4))
            config = CodingConfig(gamma=0.05)
            weights = solve_code(x, np.column_stack([n1, n2]), config)
            objective = code_objective(x, np.column_stack([n1, n2]), weights, config)
            assert objective <= grid_best_objective(x, n1, n2, 0.05) + 1e-6

    def test_gamma_zero_equals_constrained_least_squares(self):
        rng = np.random.default_rng(3)
        for k in (2, 3):
            x = rng.normal(size=6)
            neighbors = rng.normal(size=(6, k))
            weights = solve_code(x, neighbors, CodingConfig(gamma=0.0))
            expected = constrained_least_squares(x, neighbors)
            assert np.allclose(weights, expected, atol=1e-6)

    def test_sum_constraint(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            weights = solve_code(rng.normal(size=8), rng.normal(size=(8, 6)))
            assert abs(weights.sum() - 1.0) <= 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            solve_code(np.ones(3), np.ones((4, 2)))

    def test_translation_covariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=5)
        neighbors = rng.normal(size=(5, 4))
        shift = rng.normal(size=(5, 1))
        config = CodingConfig(gamma=0.02)
        base = solve_code(x, neighbors, config)
        shifted = solve_code(x + shift[:, 0], neighbors + shift, config)
        assert np.allclose(base, shifted, atol=1e-6)

    def test_l1_monotone_in_gamma(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            x = rng.normal(size=6)
            neighbors = rng.normal(size=(6, 4))
            norms = [
                np.abs(solve_code(x, neighbors, CodingConfig(gamma=g))).sum()
                for g in (0.0, 0.01, 0.05, 0.2, 1.0)
            ]
            assert all(b <= a + 1e-8 for a, b in zip(norms, norms[1:]))

    def test_fallback_error_raises(self):
        rng = np.random.default_rng(8)
        config = CodingConfig(gamma=0.001, max_iterations=1, tolerance=1e-16, fallback="error")
        with pytest.raises(ConvergenceError):
            solve_code(rng.normal(size=3), rng.normal(size=(3, 8)), config)

    def test_fallback_uniform_warns(self):
        rng = np.random.default_rng(8)
        config = CodingConfig(gamma=0.001, max_iterations=1, tolerance=1e-16)
        with pytest.warns(UserWarning, match="uniform"):
            weights = solve_code(rng.normal(size=3), rng.normal(size=(3, 8)), config)
        assert np.allclose(weights, 1.0 / 8.0)


class TestOracle:
    def test_oracle_dominates_solver_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            m = rng.choice([2, 5, 10])
            k = rng.choice([2, 3, 4])
            config = CodingConfig(gamma=float(rng.choice([0.0, 0.01, 0.1])))
            x = rng.standard_normal(m)
            neighbors = rng.standard_normal((m, k))
            solver_obj = code_objective(x, neighbors, solve_code(x, neighbors, config), config)
            oracle_obj = code_objective(x, neighbors, oracle_code(x, neighbors, config), config)
            assert solver_obj <= oracle_obj + 1e-6
            assert oracle_obj <= solver_obj + 1e-6  # oracle is exhaustive

    def test_oracle_k1(self):
        assert np.array_equal(oracle_code(np.ones(2), np.zeros((2, 1))), [1.0])

    def test_oracle_gamma_zero_is_least_squares(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=5)
        neighbors = rng.normal(size=(5, 2))
        assert np.allclose(
            oracle_code(x, neighbors, CodingConfig(gamma=0.0)),
            constrained_least_squares(x, neighbors),
            atol=1e-9,
        )

    def test_oracle_rejects_large_k(self):
        with pytest.raises(ValueError):
            oracle_code(np.ones(2), np.ones((2, 5)))


class TestViewCodes:
    def test_collinear_middle_point_symmetric(self):
        view = ViewMatrix("v", np.array([[0.0, 1.0, 2.0]]))
        index = build_neighbor_index(view, k=2)
        codes = solve_view_codes(view, index, CodingConfig(gamma=1e-6))
        middle = codes.matrix[:, 1]
        assert abs(middle[0] - 0.5) < 1e-6 and abs(middle[2] - 0.5) < 1e-6

    def test_k1_gives_unit_columns(self):
        rng = np.random.default_rng(13)
        view = ViewMatrix("v", rng.normal(size=(4, 12)))
        codes = solve_view_codes(view, build_neighbor_index(view, k=1))
        matrix = codes.matrix
        assert np.all((matrix == 0.0) | (matrix == 1.0))
        assert np.allclose(matrix.sum(axis=0), 1.0)

    def test_duplicate_sample_takes_full_weight(self):
        base = np.random.default_rng(14).normal(size=(5, 6))
        base[:, 3] = base[:, 0]  # sample 3 duplicates sample 0
        view = ViewMatrix("v", base)
        index = build_neighbor_index(view, k=3)
        config = CodingConfig(gamma=1e-8)
        codes = solve_view_codes(view, index, config)
        x = base[:, 0]
        neighbors = base[:, index.indices[0]]
        oracle_obj = code_objective(x, neighbors, oracle_code(x, neighbors, config), config)
        solver_obj = code_objective(x, neighbors, codes.matrix[index.indices[0], 0], config)
        assert solver_obj <= oracle_obj + 1e-6
        assert abs(codes.matrix[3, 0] - 1.0) < 1e-4

    def test_column_sums_and_zero_diagonal(self):
        rng = np.random.default_rng(15)
        view = ViewMatrix("v", rng.normal(size=(6, 40)))
        codes = solve_view_codes(view, build_neighbor_index(view, k=5))
        assert np.max(np.abs(codes.matrix.sum(axis=0) - 1.0)) <= 1e-8
        assert np.all(np.diag(codes.matrix) == 0.0)

    def test_deterministic(self):
        rng = np.random.default_rng(16)
        view = ViewMatrix("v", rng.normal(size=(5, 30)))
        index = build_neighbor_index(view, k=6)
        a = solve_view_codes(view, index)
        b = solve_view_codes(view, index)
        assert np.array_equal(a.matrix, b.matrix)


class TestSparseCodeType:
    def test_scatter_layout(self):
        code = SparseCode.build(2, np.array([0.25, 0.75]), np.array([0, 4]), n=5)
        assert code.scattered.tolist() == [0.25, 0.0, 0.0, 0.0, 0.75]
        assert code.scattered[2] == 0.0

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            SparseCode.build(0, np.array([0.5, 0.4]), np.array([1, 2]), n=4)

    def test_rejects_self_neighbor(self):
        with pytest.raises(ValueError):
            SparseCode.build(1, np.array([1.0]), np.array([1]), n=3)
