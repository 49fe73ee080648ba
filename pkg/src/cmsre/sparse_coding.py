"""Per-sample sparse reconstruction from nearest neighbors.

Each sample is expressed as a weighted combination of its k nearest neighbors
in the same view, with the weights constrained to sum to one and penalized in
l1 norm:

    minimize ||x - N s||^2 + gamma * ||s||_1   subject to  sum(s) = 1

where the columns of ``N`` are the neighbor feature vectors. The per-sample
weight vectors, scattered to full length with zeros, form the columns of the
view's n x n coefficient matrix.

The solver is a pairwise coordinate descent: moving mass between two
coordinates keeps the sum constraint satisfied by construction, and each pair
subproblem is a one-dimensional piecewise quadratic minimized in closed form.
Sweeps are accelerated by exact line searches along recent aggregate
displacements, which cures the crawl on rank-deficient Gram matrices. All
samples of a view are solved together as one vectorized batch.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import NeighborIndex, ViewMatrix
from .errors import ConvergenceError

SUM_TOLERANCE = 1e-8


@dataclass(frozen=True)
class CodingConfig:
    """Solver settings for the penalized sum-to-one reconstruction problem.

    ``gamma=None`` selects the automatic penalty ``0.01 * ||x||^2 / k`` per
    sample. ``max_iterations`` counts full sweeps over all coordinate pairs;
    a sweep improving the objective by less than ``tolerance`` stops the
    solver. ``fallback`` controls what a non-converged solve returns.
    """

    gamma: Optional[float] = None
    max_iterations: int = 1000
    tolerance: float = 1e-12
    fallback: str = "uniform"

    def __post_init__(self) -> None:
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.fallback not in ("uniform", "error"):
            raise ValueError("fallback must be 'uniform' or 'error'")

    def effective_gamma(self, x: np.ndarray, k: int) -> float:
        if self.gamma is not None:
            return self.gamma
        return 0.01 * float(x @ x) / k


@dataclass(frozen=True)
class SparseCode:
    """Reconstruction weights of one sample over its neighbor list.

    ``weights[j]`` belongs to neighbor ``neighbor_indices[j]``; ``scattered``
    is the same vector placed into a length-n column (zero elsewhere, and
    always zero at the sample's own position).
    """

    sample: int
    weights: np.ndarray
    scattered: np.ndarray

    @classmethod
    def build(
        cls, sample: int, weights: np.ndarray, neighbor_indices: np.ndarray, n: int
    ) -> "SparseCode":
        weights = np.asarray(weights, dtype=float)
        if abs(weights.sum() - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"sample {sample}: weights sum to {weights.sum()!r}, not 1")
        if np.any(np.asarray(neighbor_indices) == sample):
            raise ValueError(f"sample {sample} appears in its own neighbor list")
        scattered = np.zeros(n)
        scattered[neighbor_indices] = weights
        return cls(sample=sample, weights=weights, scattered=scattered)


@dataclass(frozen=True)
class CoefficientMatrix:
    """n x n matrix whose column i holds sample i's scattered code."""

    view: str
    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        n, m = matrix.shape
        if n != m:
            raise ValueError(f"coefficient matrix must be square, got {matrix.shape}")
        if np.any(np.diag(matrix) != 0.0):
            raise ValueError("coefficient matrix must have a zero diagonal")
        worst = np.max(np.abs(matrix.sum(axis=0) - 1.0))
        if worst > SUM_TOLERANCE:
            raise ValueError(f"coefficient columns must sum to 1 (worst error {worst:.3e})")
        object.__setattr__(self, "matrix", matrix)


def solve_code(
    x: np.ndarray, neighbors: np.ndarray, config: Optional[CodingConfig] = None
) -> np.ndarray:
    """Solve one penalized reconstruction problem; returns the length-k weights."""
    config = config or CodingConfig()
    x = np.asarray(x, dtype=float).ravel()
    neighbors = np.asarray(neighbors, dtype=float)
    if neighbors.ndim != 2 or neighbors.shape[0] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: x has {x.shape[0]} features, "
            f"neighbors have shape {neighbors.shape}"
        )
    weights, converged = _batch_descent(x[None, :], neighbors[None, :, :], config)
    if not converged[0]:
        if config.fallback == "error":
            raise ConvergenceError(
                f"sparse code did not converge in {config.max_iterations} sweeps"
            )
        warnings.warn(
            f"sparse code did not converge in {config.max_iterations} sweeps; "
            "falling back to uniform weights",
            stacklevel=2,
        )
        return np.full(neighbors.shape[1], 1.0 / neighbors.shape[1])
    return weights[0]


def solve_view_codes(
    view: ViewMatrix, index: NeighborIndex, config: Optional[CodingConfig] = None
) -> CoefficientMatrix:
    """Solve every sample of a view and assemble the coefficient matrix."""
    config = config or CodingConfig()
    if index.view is not view and index.view.data.shape != view.data.shape:
        raise ValueError("neighbor index was built over a different view")
    n = view.sample_count
    targets = view.data.T  # (n, m_v)
    neighbor_features = view.data.T[index.indices].transpose(0, 2, 1)  # (n, m_v, k)
    weights, converged = _batch_descent(targets, neighbor_features, config)
    if not converged.all():
        bad = np.flatnonzero(~converged)
        if config.fallback == "error":
            raise ConvergenceError(
                f"view '{view.name}': sparse codes for samples {bad.tolist()} did not "
                f"converge in {config.max_iterations} sweeps"
            )
        warnings.warn(
            f"view '{view.name}': {bad.size} sparse code(s) did not converge "
            f"(samples {bad.tolist()[:8]}{'...' if bad.size > 8 else ''}); "
            "falling back to uniform weights",
            stacklevel=2,
        )
        weights[bad] = 1.0 / index.k
    S = np.zeros((n, n))
    rows = index.indices.ravel()
    cols = np.repeat(np.arange(n), index.k)
    S[rows, cols] = weights.ravel()
    return CoefficientMatrix(view=view.name, matrix=S)


def oracle_code(
    x: np.ndarray, neighbors: np.ndarray, config: Optional[CodingConfig] = None
) -> np.ndarray:
    """Brute-force reference solver for small neighbor counts (k <= 4).

    Enumerates every nonempty support and every sign assignment on it, solves
    the equality-constrained stationarity system for each, keeps the
    sign-consistent candidates, and returns the best. Exhaustive up to
    numerical round-off, so it serves as an independent check on the
    coordinate-descent solver.
    """
    config = config or CodingConfig()
    x = np.asarray(x, dtype=float).ravel()
    neighbors = np.asarray(neighbors, dtype=float)
    k = neighbors.shape[1]
    if k > 4:
        raise ValueError(f"oracle_code supports k <= 4, got k={k}")
    if neighbors.shape[0] != x.shape[0]:
        raise ValueError("dimension mismatch between x and neighbors")
    gamma = config.effective_gamma(x, k)

    G = neighbors.T @ neighbors
    c = neighbors.T @ x
    best: Optional[np.ndarray] = None
    best_objective = np.inf
    for size in range(1, k + 1):
        for support in itertools.combinations(range(k), size):
            support = list(support)
            sub_G = G[np.ix_(support, support)]
            sub_c = c[support]
            sign_choices = (
                [(1.0,) * size]
                if gamma == 0.0
                else itertools.product((1.0, -1.0), repeat=size)
            )
            for signs in sign_choices:
                signs = np.asarray(signs)
                kkt = np.zeros((size + 1, size + 1))
                kkt[:size, :size] = 2.0 * sub_G
                kkt[:size, size] = 1.0
                kkt[size, :size] = 1.0
                rhs = np.concatenate([2.0 * sub_c - gamma * signs, [1.0]])
                try:
                    solution = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    solution, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
                s_support = solution[:size]
                if gamma > 0.0 and np.any(signs * s_support < -1e-12):
                    continue
                if abs(s_support.sum() - 1.0) > 1e-9:
                    continue
                candidate = np.zeros(k)
                candidate[support] = s_support
                objective = _objective_value(x, neighbors, candidate, gamma)
                if objective < best_objective:
                    best_objective = objective
                    best = candidate
    assert best is not None  # support of size 1 always yields a candidate
    return best


def code_objective(
    x: np.ndarray,
    neighbors: np.ndarray,
    weights: np.ndarray,
    config: Optional[CodingConfig] = None,
) -> float:
    """Penalized objective value of a weight vector."""
    config = config or CodingConfig()
    x = np.asarray(x, dtype=float).ravel()
    neighbors = np.asarray(neighbors, dtype=float)
    gamma = config.effective_gamma(x, neighbors.shape[1])
    return _objective_value(x, neighbors, np.asarray(weights, dtype=float), gamma)


def _objective_value(x, neighbors, weights, gamma) -> float:
    residual = x - neighbors @ weights
    return float(residual @ residual) + gamma * float(np.abs(weights).sum())


def _batch_descent(
    targets: np.ndarray, neighbors: np.ndarray, config: CodingConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Solve a batch of reconstruction problems sharing one neighbor count.

    ``targets`` is (B, m), ``neighbors`` (B, m, k). Returns the weight matrix
    (B, k) and a per-problem convergence flag. Problems leave the active
    set as soon as a sweep stops improving their objective.
    """
    B, _, k = neighbors.shape
    if k == 1:
        return np.ones((B, 1)), np.ones(B, dtype=bool)

    G = np.einsum("bmi,bmj->bij", neighbors, neighbors)
    c = np.einsum("bmi,bm->bi", neighbors, targets)
    xx = np.einsum("bm,bm->b", targets, targets)
    if config.gamma is not None:
        gammas = np.full(B, float(config.gamma))
    else:
        gammas = 0.01 * xx / k

    s = np.full((B, k), 1.0 / k)
    pairs = list(itertools.combinations(range(k), 2))

    def objective_of(G_, c_, xx_, gam_, s_):
        Gs = np.einsum("bij,bj->bi", G_, s_)
        return (
            xx_
            - 2.0 * np.einsum("bi,bi->b", c_, s_)
            + np.einsum("bi,bi->b", s_, Gs)
            + gam_ * np.abs(s_).sum(axis=1)
        )

    objective = objective_of(G, c, xx, gammas, s)
    converged = np.zeros(B, dtype=bool)
    active = np.arange(B)
    previous_start = s.copy()  # sweep-start states, for the two-sweep direction

    for _ in range(config.max_iterations):
        if active.size == 0:
            break
        Ga, ca, xa, gam = G[active], c[active], xx[active], gammas[active]
        sa = s[active]
        sweep_start = sa.copy()
        two_sweeps_ago = previous_start[active]

        h = np.einsum("bij,bj->bi", Ga, sa)
        for i, j in pairs:
            a = Ga[:, i, i] + Ga[:, j, j] - 2.0 * Ga[:, i, j]
            b = (ca[:, i] - h[:, i]) - (ca[:, j] - h[:, j])
            t = _pair_steps(a, b, gam, sa[:, i], sa[:, j])
            if np.any(t != 0.0):
                sa[:, i] += t
                sa[:, j] -= t
                h += t[:, None] * (Ga[:, :, i] - Ga[:, :, j])

        # accelerate along the recent aggregate displacements; pairwise moves
        # alone crawl when the Gram matrix is rank-deficient
        for reference in (sweep_start, two_sweeps_ago):
            direction = sa - reference
            direction -= direction.mean(axis=1, keepdims=True)  # exactly sum-preserving
            usable = np.abs(direction).max(axis=1) > 1e-12 * (
                1.0 + np.abs(sa).max(axis=1)
            )
            if not np.any(usable):
                continue
            h = np.einsum("bij,bj->bi", Ga, sa)
            t = _line_steps(sa, direction, Ga, ca, h, gam)
            t = np.where(usable & np.isfinite(t), t, 0.0)
            if not np.any(t != 0.0):
                continue
            candidate = sa + t[:, None] * direction
            # large steps can amplify the direction's round-off sum defect;
            # repair it exactly before deciding whether the step helps
            candidate -= (candidate.sum(axis=1, keepdims=True) - 1.0) / k
            improved = objective_of(Ga, ca, xa, gam, candidate) < objective_of(
                Ga, ca, xa, gam, sa
            )
            take = improved & (t != 0.0)
            sa = np.where(take[:, None], candidate, sa)

        new_objective = objective_of(Ga, ca, xa, gam, sa)
        improvement = objective[active] - new_objective
        s[active] = sa
        objective[active] = new_objective
        previous_start[active] = sweep_start
        done = improvement < config.tolerance
        converged[active[done]] = True
        active = active[~done]

    return s, converged


def _pair_steps(a, b, gam, si, sj):
    """Vectorized closed-form minimizer of the transfer between two weights.

    Minimizes ``a t^2 - 2 b t + gam (|si + t| + |sj - t|)`` per problem. The
    minimum sits at a kink or at a stationary point of one sign branch; flat
    directions (identical neighbor columns) equalize the pair instead, which
    never increases the l1 term.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        candidates = np.stack([-si, sj, b / a, (b - gam) / a, (b + gam) / a])
        values = (
            a * candidates * candidates
            - 2.0 * b * candidates
            + gam * (np.abs(si + candidates) + np.abs(sj - candidates))
        )
    values = np.where(np.isfinite(candidates), values, np.inf)
    baseline = gam * (np.abs(si) + np.abs(sj))
    best = np.argmin(values, axis=0)
    columns = np.arange(a.shape[0])
    step = np.where(values[best, columns] < baseline, candidates[best, columns], 0.0)
    return np.where(a <= 0.0, 0.5 * (sj - si), step)


def _line_steps(s, direction, G, c, h, gam):
    """Vectorized exact minimizer of the objective along ``s + t * direction``.

    Directions are differences of feasible points, so they sum to zero and
    any step stays on the constraint set. Along the line the objective is a
    piecewise quadratic with kinks where a weight crosses zero; the minimum
    is at a kink or at a stationary point of one sign segment.
    """
    B, k = s.shape
    a = np.einsum("bi,bij,bj->b", direction, G, direction)
    b = np.einsum("bi,bi->b", c - h, direction)

    with np.errstate(divide="ignore", invalid="ignore"):
        kinks = np.where(direction != 0.0, -s / direction, np.inf)
    kinks = np.where(np.isfinite(kinks), kinks, np.inf)
    kinks = np.sort(kinks, axis=1)
    finite = np.isfinite(kinks)

    first = np.where(finite[:, 0], kinks[:, 0] - 1.0, 0.0)
    last = np.where(
        finite.any(axis=1), np.max(np.where(finite, kinks, -np.inf), axis=1) + 1.0, 0.0
    )
    midpoints = 0.5 * (kinks[:, 1:] + kinks[:, :-1])  # non-finite rows masked below
    representatives = np.concatenate(
        [first[:, None], midpoints, last[:, None], np.where(finite, kinks, 0.0)], axis=1
    )
    with np.errstate(invalid="ignore"):
        slopes = np.einsum(
            "bck,bk->bc",
            np.sign(s[:, None, :] + representatives[:, :, None] * direction[:, None, :]),
            direction,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        stationary = (2.0 * b[:, None] - gam[:, None] * slopes) / (2.0 * a[:, None])
    stationary = np.where(a[:, None] > 0.0, stationary, np.inf)

    candidates = np.concatenate([np.where(finite, kinks, np.inf), stationary], axis=1)
    with np.errstate(invalid="ignore"):
        shifted = s[:, None, :] + candidates[:, :, None] * direction[:, None, :]
        values = (
            a[:, None] * candidates * candidates
            - 2.0 * b[:, None] * candidates
            + gam[:, None] * np.abs(shifted).sum(axis=2)
        )
    values = np.where(np.isfinite(candidates), values, np.inf)
    baseline = gam * np.abs(s).sum(axis=1)
    best = np.argmin(values, axis=1)
    rows = np.arange(B)
    return np.where(values[rows, best] < baseline, candidates[rows, best], 0.0)
