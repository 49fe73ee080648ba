"""Spectral embedding of sparse reconstruction structure, with view coupling.

Each view's coefficient matrix ``S`` induces a reconstruction operator
``M = (I - S)(I - S)^T`` whose small-eigenvalue eigenvectors preserve the
neighbor reconstruction relations in low dimension. Views are coupled by an
alternating eigendecomposition: every view is re-embedded against

    M - lam * sum_u  Yu^T Yu        (u ranging over the other views)

which pulls the embeddings' sample-similarity structure toward consensus.
The coupled objective being traced is

    sum_v tr(Yv Mv Yv^T) + lam * sum_{v != u} -tr(Yv^T Yv Yu^T Yu).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .dataset import MultiViewDataset
from .errors import NumericalError
from .sparse_coding import CoefficientMatrix

SYMMETRY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class ReconstructionOperator:
    """Symmetric positive semidefinite operator of one view."""

    view: str
    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"operator must be square, got shape {matrix.shape}")
        asymmetry = np.max(np.abs(matrix - matrix.T))
        if asymmetry > 1e-10:
            raise ValueError(f"operator is not symmetric (max asymmetry {asymmetry:.3e})")
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True)
class Embedding:
    """Row-orthonormal ``d x n`` coordinates for one view's samples."""

    view: str
    coordinates: np.ndarray

    def __post_init__(self) -> None:
        coords = np.asarray(self.coordinates, dtype=float)
        if coords.ndim != 2:
            raise ValueError(f"coordinates must be 2-D, got shape {coords.shape}")
        d, n = coords.shape
        if d >= n:
            raise ValueError(f"embedding dimension {d} must be below sample count {n}")
        gram = coords @ coords.T
        worst = np.max(np.abs(gram - np.eye(d)))
        if worst > SYMMETRY_TOLERANCE:
            raise ValueError(f"embedding rows are not orthonormal (error {worst:.3e})")
        object.__setattr__(self, "coordinates", coords)

    @property
    def dim(self) -> int:
        return self.coordinates.shape[0]

    @property
    def sample_count(self) -> int:
        return self.coordinates.shape[1]


@dataclass(frozen=True)
class CmsreConfig:
    """Settings for the co-regularized fit.

    ``d`` is the target dimension, ``lam`` the coupling weight (0 decouples
    the views), and a fit stops once the relative objective change per sweep
    drops below ``convergence_tolerance`` or after ``max_outer_iterations``
    sweeps.
    """

    d: int
    lam: float = 0.8
    max_outer_iterations: int = 50
    convergence_tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        if self.convergence_tolerance <= 0:
            raise ValueError("convergence_tolerance must be > 0")


@dataclass(frozen=True)
class TraceRecord:
    """Objective snapshot after one full sweep (iteration 0 = initialization)."""

    iteration: int
    objective: float
    per_view_reconstruction: tuple[float, ...]
    total_disagreement: float
    delta: float


def build_operator(code: CoefficientMatrix) -> ReconstructionOperator:
    """Form ``(I - S)(I - S)^T`` from a coefficient matrix, symmetrized."""
    n = code.matrix.shape[0]
    residual_map = np.eye(n) - code.matrix
    matrix = residual_map @ residual_map.T
    matrix = 0.5 * (matrix + matrix.T)
    return ReconstructionOperator(view=code.view, matrix=matrix)


def symmetric_eigendecomposition(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix.

    Returns eigenvalues sorted ascending and the matching orthonormal
    eigenvectors as rows. Each eigenvector's sign is fixed so its
    largest-magnitude entry (lowest index on ties) is positive, which makes
    the decomposition deterministic up to degenerate eigenvalues.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    scale = max(1.0, float(np.linalg.norm(A)))
    asymmetry = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asymmetry:.3e})")
    symmetric = 0.5 * (A + A.T)
    try:
        values, columns = scipy.linalg.eigh(symmetric)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise NumericalError(
            "eigendecomposition failed: "
            f"n={A.shape[0]}, frobenius_norm={np.linalg.norm(symmetric):.6e}, "
            f"max_abs={np.max(np.abs(symmetric)):.6e}, asymmetry={asymmetry:.3e}"
        ) from exc
    vectors = columns.T.copy()
    anchor = np.argmax(np.abs(vectors), axis=1)
    flip = vectors[np.arange(vectors.shape[0]), anchor] < 0.0
    vectors[flip] *= -1.0
    return values, vectors


def single_view_embed(operator: ReconstructionOperator, d: int) -> Embedding:
    """Embed one view alone: eigenvectors ranked 2..d+1 of its operator.

    The bottom eigenvector (the near-constant mode with eigenvalue close to
    zero) is discarded.
    """
    n = operator.matrix.shape[0]
    _check_dim(d, n)
    _, vectors = symmetric_eigendecomposition(operator.matrix)
    return Embedding(view=operator.view, coordinates=vectors[1 : d + 1])


def disagreement(a, b) -> float:
    """Similarity-structure disagreement between two embeddings.

    Evaluates ``-tr(Ya^T Ya Yb^T Yb)`` through the algebraically identical
    ``-||Ya Yb^T||_F^2``, which costs O(d^2 n) instead of O(n^2 d).
    """
    Ya = _coordinates(a)
    Yb = _coordinates(b)
    if Ya.shape != Yb.shape:
        raise ValueError(f"embedding shapes differ: {Ya.shape} vs {Yb.shape}")
    cross = Ya @ Yb.T
    return -float(np.sum(cross * cross))


def coreg_update_view(
    operator: ReconstructionOperator,
    others: Sequence[Embedding],
    lam: float,
    d: int,
) -> Embedding:
    """Re-embed one view against the frozen embeddings of the other views.

    Eigendecomposes ``M - lam * sum_u Yu^T Yu`` and keeps d of the bottom
    d+1 eigenvectors, discarding the one most aligned with the constant
    vector. The constant mode is only an approximate eigenvector of the
    coupled matrix, so alignment rather than position decides the exclusion.
    """
    matrix = operator.matrix
    n = matrix.shape[0]
    _check_dim(d, n)
    coupled = matrix.copy()
    for other in others:
        coords = other.coordinates
        if coords.shape[1] != n:
            raise ValueError(
                f"embedding for view '{other.view}' has {coords.shape[1]} samples, expected {n}"
            )
        coupled -= lam * (coords.T @ coords)
    coupled = 0.5 * (coupled + coupled.T)
    _, vectors = symmetric_eigendecomposition(coupled)
    bottom = vectors[: d + 1]
    alignment = np.abs(bottom @ np.ones(n)) / np.sqrt(n)
    drop = int(np.argmax(alignment))
    keep = [row for row in range(d + 1) if row != drop]
    return Embedding(view=operator.view, coordinates=bottom[keep])


def fit_cmsre(
    dataset: MultiViewDataset,
    codes: Sequence[CoefficientMatrix],
    config: CmsreConfig,
) -> tuple[list[Embedding], list[TraceRecord]]:
    """Run the full co-regularized fit.

    Parameters
    ----------
    dataset : MultiViewDataset
        Provides view names and the sample count; the feature matrices
        themselves only enter through ``codes``.
    codes : sequence of CoefficientMatrix
        One coefficient matrix per view, in dataset view order.
    config : CmsreConfig

    Returns
    -------
    embeddings : list of Embedding
        Final per-view embeddings, in view order.
    trace : list of TraceRecord
        Objective trajectory; record 0 describes the decoupled
        initialization, every further record one full update sweep.

    Every view is first embedded on its own, then the views are swept in
    index order, each re-embedded against the most recent embeddings of all
    the others, until the relative objective change per sweep falls below
    the configured tolerance or the sweep cap is reached.
    """
    n = dataset.sample_count
    m = dataset.view_count
    if len(codes) != m:
        raise ValueError(f"got {len(codes)} coefficient matrices for {m} views")
    for view, code in zip(dataset.views, codes):
        if code.view != view.name:
            raise ValueError(
                f"coefficient matrix order mismatch: expected view '{view.name}', "
                f"got '{code.view}'"
            )
        if code.matrix.shape[0] != n:
            raise ValueError(
                f"coefficient matrix for view '{code.view}' has "
                f"{code.matrix.shape[0]} samples, expected {n}"
            )
    _check_dim(config.d, n)

    operators = [build_operator(code) for code in codes]
    embeddings = [single_view_embed(op, config.d) for op in operators]

    objective, per_view, total_dis = _objective_components(embeddings, operators, config.lam)
    _require_finite(objective, 0)
    trace = [
        TraceRecord(
            iteration=0,
            objective=objective,
            per_view_reconstruction=tuple(per_view),
            total_disagreement=total_dis,
            delta=0.0,
        )
    ]

    previous = objective
    for sweep in range(1, config.max_outer_iterations + 1):
        for v in range(m):
            others = [embeddings[u] for u in range(m) if u != v]
            embeddings[v] = coreg_update_view(operators[v], others, config.lam, config.d)
        objective, per_view, total_dis = _objective_components(
            embeddings, operators, config.lam
        )
        _require_finite(objective, sweep)
        delta = abs(objective - previous) / max(1.0, abs(previous))
        trace.append(
            TraceRecord(
                iteration=sweep,
                objective=objective,
                per_view_reconstruction=tuple(per_view),
                total_disagreement=total_dis,
                delta=delta,
            )
        )
        previous = objective
        if delta < config.convergence_tolerance:
            break
    return embeddings, trace


def termination_reason(trace: Sequence[TraceRecord], config: CmsreConfig) -> str:
    """Whether a fit trace ended by convergence or by hitting the sweep cap."""
    if len(trace) > 1 and trace[-1].delta < config.convergence_tolerance:
        return "converged"
    return "iteration_cap"


def principal_angles(a, b) -> np.ndarray:
    """Principal angles (radians, ascending) between two row spaces.

    Both inputs must have orthonormal rows; zero angles mean identical
    subspaces.
    """
    Ya = _coordinates(a)
    Yb = _coordinates(b)
    singular_values = np.linalg.svd(Ya @ Yb.T, compute_uv=False)
    return np.arccos(np.clip(singular_values, -1.0, 1.0))


def reconstruction_objective(embedding, operator: ReconstructionOperator) -> float:
    """Evaluate ``tr(Y M Y^T)`` for one view."""
    Y = _coordinates(embedding)
    return float(np.sum((Y @ operator.matrix) * Y))


def _objective_components(
    embeddings: Sequence[Embedding],
    operators: Sequence[ReconstructionOperator],
    lam: float,
) -> tuple[float, list[float], float]:
    per_view = [reconstruction_objective(e, op) for e, op in zip(embeddings, operators)]
    total_dis = 0.0
    m = len(embeddings)
    for v in range(m):
        for u in range(m):
            if u != v:
                total_dis += disagreement(embeddings[v], embeddings[u])
    return sum(per_view) + lam * total_dis, per_view, total_dis


def _require_finite(objective: float, sweep: int) -> None:
    if not np.isfinite(objective):
        raise NumericalError(f"objective became non-finite at sweep {sweep}: {objective!r}")


def _check_dim(d: int, n: int) -> None:
    if not 1 <= d <= n - 2:
        raise ValueError(f"d out of range: d={d} with {n} samples (need 1 <= d <= n-2)")


def _coordinates(embedding_or_matrix) -> np.ndarray:
    if isinstance(embedding_or_matrix, Embedding):
        return embedding_or_matrix.coordinates
    return np.asarray(embedding_or_matrix, dtype=float)
