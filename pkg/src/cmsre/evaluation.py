"""Evaluation protocols: repeated-split 1NN classification and L1 retrieval.

Fits are transductive (every sample participates in fitting); a split only
decides which samples are scored against the rest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import MultiViewDataset, build_neighbor_index
from .embedding import CmsreConfig, Embedding, fit_cmsre, _coordinates
from .errors import DatasetError
from .sparse_coding import CodingConfig, solve_view_codes

VIEW_POLICIES = ("per_view_best", "concatenate")


@dataclass(frozen=True)
class SplitPlan:
    """Reproducible random holdout plan: one test-index set per trial."""

    seed: int
    trials: int
    test_count: int
    test_indices: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class ClassificationReport:
    per_trial_accuracy: tuple[float, ...]
    mean: float
    max: float

    @classmethod
    def from_accuracies(cls, accuracies: Sequence[float]) -> "ClassificationReport":
        accuracies = tuple(float(a) for a in accuracies)
        return cls(
            per_trial_accuracy=accuracies,
            mean=float(np.mean(accuracies)),
            max=float(np.max(accuracies)),
        )


@dataclass(frozen=True)
class RetrievalReport:
    precision_at_n: float
    recall_at_n: float
    map: float
    f1: float
    cutoff: Optional[int]
    queries_evaluated: int
    queries_skipped: int


def make_split_plan(n: int, test_count: int, trials: int, seed: int) -> SplitPlan:
    """Draw ``trials`` random test sets of ``test_count`` distinct samples."""
    if not 1 <= test_count <= n - 1:
        raise ValueError(f"test_count out of range: {test_count} with {n} samples")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    test_sets = tuple(
        np.sort(rng.choice(n, size=test_count, replace=False)) for _ in range(trials)
    )
    return SplitPlan(seed=seed, trials=trials, test_count=test_count, test_indices=test_sets)


def knn_classify_1nn(
    embedding,
    labels: Sequence[str],
    test_indices: np.ndarray,
    metric: str = "euclidean",
) -> float:
    """1-nearest-neighbor accuracy of the held-out samples.

    Every test sample takes the label of its nearest training sample in the
    embedding (ties toward the lower training index).
    """
    if metric != "euclidean":
        raise ValueError(f"unsupported metric '{metric}'")
    if labels is None:
        raise ValueError("labels required for classification")
    Y = _coordinates(embedding)
    n = Y.shape[1]
    labels = np.asarray(labels)
    test_indices = np.asarray(test_indices, dtype=np.int64)
    train_indices = np.setdiff1d(np.arange(n), test_indices)  # sorted ascending
    if train_indices.size == 0:
        raise ValueError("empty training set")
    distances = cdist(Y[:, test_indices].T, Y[:, train_indices].T, metric="euclidean")
    nearest = train_indices[np.argmin(distances, axis=1)]
    return float(np.mean(labels[nearest] == labels[test_indices]))


def embed_for_evaluation(
    dataset: MultiViewDataset,
    config: CmsreConfig,
    k: int = 10,
    coding: Optional[CodingConfig] = None,
) -> list[Embedding]:
    """Neighbor search, sparse coding, and fit, in one call."""
    coding = coding or CodingConfig()
    k = min(k, dataset.sample_count - 1)
    codes = [
        solve_view_codes(view, build_neighbor_index(view, k), coding)
        for view in dataset.views
    ]
    embeddings, _ = fit_cmsre(dataset, codes, config)
    return embeddings


def evaluate_classification(
    dataset: MultiViewDataset,
    config: CmsreConfig,
    split: SplitPlan,
    view_policy: str = "concatenate",
    *,
    k: int = 10,
    coding: Optional[CodingConfig] = None,
) -> ClassificationReport:
    """Fit on the full dataset, then score each trial's holdout with 1NN.

    ``per_view_best`` reports the best single view's accuracy per trial;
    ``concatenate`` stacks all views' embeddings before classification. The
    fit does not depend on the split, so it runs once and is shared by every
    trial.
    """
    if view_policy not in VIEW_POLICIES:
        raise ValueError(f"unknown view policy '{view_policy}'")
    if dataset.labels is None:
        raise DatasetError("dataset has no labels; classification needs them")
    embeddings = embed_for_evaluation(dataset, config, k=k, coding=coding)
    stacked = np.vstack([e.coordinates for e in embeddings])
    accuracies = []
    for test_indices in split.test_indices:
        if view_policy == "concatenate":
            accuracy = knn_classify_1nn(stacked, dataset.labels, test_indices)
        else:
            accuracy = max(
                knn_classify_1nn(e, dataset.labels, test_indices) for e in embeddings
            )
        accuracies.append(accuracy)
    return ClassificationReport.from_accuracies(accuracies)


def retrieve(
    embedding,
    queries: Sequence[int],
    relevant: Mapping[int, Sequence[int]],
    metric: str = "l1",
    cutoff: Optional[int] = None,
) -> RetrievalReport:
    """Rank the database by L1 distance to each query and score the ranking.

    ``cutoff=None`` evaluates precision and recall at each query's own
    relevant-set size, which makes the two comparable. Average precision is
    always taken over the full ranking. Queries with empty relevant sets are
    skipped with a warning.
    """
    if metric != "l1":
        raise ValueError(f"unsupported metric '{metric}'")
    Y = _coordinates(embedding)
    n = Y.shape[1]
    if cutoff is not None and cutoff < 1:
        raise ValueError("cutoff must be >= 1")

    precisions, recalls, average_precisions = [], [], []
    skipped = 0
    for q in queries:
        q = int(q)
        relevant_set = np.asarray(sorted(set(int(r) for r in relevant.get(q, ()))))
        if relevant_set.size and np.any(relevant_set == q):
            raise ValueError(f"relevant set for query {q} must exclude the query itself")
        if relevant_set.size == 0:
            skipped += 1
            continue
        dist = np.abs(Y - Y[:, q : q + 1]).sum(axis=0)
        dist[q] = np.inf
        ranking = np.argsort(dist, kind="stable")[: n - 1]  # query excluded
        hits = np.isin(ranking, relevant_set)
        top = cutoff if cutoff is not None else relevant_set.size
        found = int(hits[:top].sum())
        precisions.append(found / top)
        recalls.append(found / relevant_set.size)
        hit_positions = np.flatnonzero(hits)
        precision_at_hits = (np.arange(hit_positions.size) + 1.0) / (hit_positions + 1.0)
        average_precisions.append(float(precision_at_hits.sum() / relevant_set.size))
    if skipped:
        warnings.warn(
            f"{skipped} of {len(queries)} queries have empty relevant sets; skipped",
            stacklevel=2,
        )
    if not precisions:
        raise ValueError("no queries with non-empty relevant sets")

    precision = float(np.mean(precisions))
    recall = float(np.mean(recalls))
    f1 = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return RetrievalReport(
        precision_at_n=precision,
        recall_at_n=recall,
        map=float(np.mean(average_precisions)),
        f1=f1,
        cutoff=cutoff,
        queries_evaluated=len(precisions),
        queries_skipped=skipped,
    )


def relevance_from_labels(labels: Sequence[str], queries: Sequence[int]) -> dict[int, np.ndarray]:
    """Relevant set of each query: all other samples sharing its label."""
    labels = np.asarray(labels)
    relevant = {}
    for q in queries:
        q = int(q)
        same = np.flatnonzero(labels == labels[q])
        relevant[q] = same[same != q]
    return relevant


def sweep_lambda(
    dataset: MultiViewDataset,
    lambdas: Sequence[float],
    config: CmsreConfig,
    split: SplitPlan,
    view_policy: str = "concatenate",
    *,
    k: int = 10,
    coding: Optional[CodingConfig] = None,
) -> list[tuple[float, ClassificationReport]]:
    """Classification accuracy per coupling weight, same split plan throughout."""
    if any(lam < 0 for lam in lambdas):
        raise ValueError("lambda values must be >= 0")
    results = []
    for lam in lambdas:
        report = evaluate_classification(
            dataset,
            replace(config, lam=float(lam)),
            split,
            view_policy,
            k=k,
            coding=coding,
        )
        results.append((float(lam), report))
    return results
