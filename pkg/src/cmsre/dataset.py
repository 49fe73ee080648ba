"""Multi-view dataset handling: loading, validation, normalization, neighbor search.

A multi-view dataset is an ordered collection of dense per-view feature
matrices over a shared set of samples. Column ``j`` of every view describes
sample ``j``; the number of feature dimensions may differ between views.
Labels, when present, assign one class token per sample.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DatasetError

NORMALIZATION_MODES = ("none", "zscore", "unit_l2_columns")


@dataclass(frozen=True)
class ViewMatrix:
    """One feature representation of the samples: a dense ``dim x n`` matrix."""

    name: str
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DatasetError(
                f"view '{self.name}': expected a 2-D matrix, got shape {data.shape}"
            )
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DatasetError(f"view '{self.name}': empty matrix {data.shape}")
        bad = np.argwhere(~np.isfinite(data))
        if bad.size:
            r, c = bad[0]
            raise DatasetError(
                f"non-finite value in view '{self.name}' at row {r}, column {c}"
            )
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def sample_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MultiViewDataset:
    """Ordered per-view feature matrices over the same samples, plus labels."""

    views: tuple[ViewMatrix, ...]
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        views = tuple(self.views)
        if not views:
            raise DatasetError("dataset needs at least one view")
        n = views[0].sample_count
        for view in views[1:]:
            if view.sample_count != n:
                raise DatasetError(
                    f"sample count mismatch: view '{view.name}' has "
                    f"{view.sample_count} columns, expected {n}"
                )
        if n < 2:
            raise DatasetError(f"dataset needs at least 2 samples, got {n}")
        labels = self.labels
        if labels is not None:
            labels = tuple(str(token) for token in labels)
            if len(labels) != n:
                raise DatasetError(
                    f"label length mismatch: {len(labels)} labels for {n} samples"
                )
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels)

    @property
    def sample_count(self) -> int:
        return self.views[0].sample_count

    @property
    def view_count(self) -> int:
        return len(self.views)

    def view_named(self, name: str) -> ViewMatrix:
        for view in self.views:
            if view.name == name:
                return view
        raise KeyError(name)


@dataclass(frozen=True)
class NeighborIndex:
    """Directed k-nearest-neighbor table for one view.

    ``indices[i]`` holds the k nearest samples to sample ``i`` (never ``i``
    itself) under Euclidean distance, ``distances[i]`` the matching distances
    sorted ascending. Ties are broken toward the lower sample index.
    """

    view: ViewMatrix
    k: int
    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self) -> None:
        n = self.view.sample_count
        if self.indices.shape != (n, self.k) or self.distances.shape != (n, self.k):
            raise DatasetError("neighbor table shape does not match view")


def load_dataset(manifest_path) -> MultiViewDataset:
    """Load and validate a multi-view dataset from a JSON manifest.

    The manifest has the shape
    ``{"views": [{"name": ..., "path": ...}], "labels": <path or null>}``.
    Matrix files are headerless CSV with one row per feature dimension and one
    column per sample; the labels file holds one token per line. All paths
    resolve relative to the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DatasetError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc

    entries = manifest.get("views")
    if not isinstance(entries, list) or not entries:
        raise DatasetError(f"manifest {manifest_path}: 'views' must be a non-empty list")

    root = manifest_path.parent
    views = []
    for position, entry in enumerate(entries):
        if not isinstance(entry, dict) or "name" not in entry or "path" not in entry:
            raise DatasetError(
                f"manifest {manifest_path}: view entry {position} needs 'name' and 'path'"
            )
        views.append(ViewMatrix(str(entry["name"]), _load_matrix(root / entry["path"])))

    labels = None
    labels_path = manifest.get("labels")
    if labels_path is not None:
        labels = _load_labels(root / labels_path)

    return MultiViewDataset(views=tuple(views), labels=labels)


def _load_matrix(path: Path) -> np.ndarray:
    if not path.is_file():
        raise DatasetError(f"matrix file not found: {path}")
    try:
        return np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"failed to parse matrix file {path}: {exc}") from exc


def _load_labels(path: Path) -> tuple[str, ...]:
    if not path.is_file():
        raise DatasetError(f"labels file not found: {path}")
    lines = path.read_text().splitlines()
    return tuple(line.strip() for line in lines if line.strip() != "")


def normalize_view(view: ViewMatrix, mode: str = "zscore") -> ViewMatrix:
    """Return a normalized copy of ``view``.

    ``zscore`` standardizes every feature row to mean 0 and standard deviation
    1 (rows with zero variance are only centered); ``unit_l2_columns`` scales
    every sample column to unit L2 norm (zero columns are left untouched with
    a warning); ``none`` is the identity.
    """
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization mode '{mode}'")
    if mode == "none":
        return view
    data = view.data
    if mode == "zscore":
        mean = data.mean(axis=1, keepdims=True)
        std = data.std(axis=1, keepdims=True)
        centered = data - mean
        scale = np.where(std == 0.0, 1.0, std)
        return ViewMatrix(view.name, centered / scale)
    norms = np.linalg.norm(data, axis=0, keepdims=True)
    zero_columns = int((norms == 0.0).sum())
    if zero_columns:
        warnings.warn(
            f"view '{view.name}': {zero_columns} zero column(s) left unnormalized",
            stacklevel=2,
        )
    scale = np.where(norms == 0.0, 1.0, norms)
    return ViewMatrix(view.name, data / scale)


def build_neighbor_index(
    view: ViewMatrix, k: int, metric: str = "euclidean"
) -> NeighborIndex:
    """Build the exact directed k-nearest-neighbor table of a view.

    Distances are brute-force Euclidean; a sample is never its own neighbor,
    and equal distances resolve to the lower sample index.
    """
    if metric != "euclidean":
        raise ValueError(f"unsupported metric '{metric}'")
    n = view.sample_count
    if not 1 <= k <= n - 1:
        raise ValueError(f"k out of range: k={k} with {n} samples")
    data = view.data
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=float)
    for i in range(n):
        dist = np.linalg.norm(data - data[:, i : i + 1], axis=0)
        dist[i] = np.inf
        order = np.argsort(dist, kind="stable")[:k]
        indices[i] = order
        distances[i] = dist[order]
    return NeighborIndex(view=view, k=k, indices=indices, distances=distances)


def effective_neighbor_count(k: int, sample_count: int) -> int:
    """Clamp a requested neighbor count to the valid range ``[1, n-1]``."""
    return max(1, min(k, sample_count - 1))


def concatenate_views(views: Sequence[ViewMatrix], name: str = "stacked") -> ViewMatrix:
    """Stack several views of the same samples into one taller view."""
    return ViewMatrix(name, np.vstack([view.data for view in views]))
