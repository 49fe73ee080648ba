"""Desk-scale synthetic benchmark generator.

Samples live on a shared 1-D latent coordinate split into per-class segments.
View 1 sees a random linear image of the coordinate; view 2 sees a random
linear image of a nonlinearly warped copy. Both views get independent
additive Gaussian noise, so neither view alone is clean but they agree on the
underlying geometry.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ._io import atomic_write_json, atomic_write_matrix, atomic_write_text

AMBIENT_DIM = 20
SEGMENT_FILL = 0.98  # fraction of each unit class slot covered by samples
SIGNAL_SCALE = 3.0


def generate_synthetic(out_dir, n: int, classes: int, noise: float, seed: int) -> Path:
    """Write a labeled 2-view benchmark dataset; returns the manifest path.

    Fixed (n, classes, noise, seed) reproduce bit-identical files.
    """
    if classes < 1:
        raise ValueError("classes must be >= 1")
    if n < 4 * classes:
        raise ValueError(f"n must be >= 4 * classes (got n={n}, classes={classes})")
    if noise < 0:
        raise ValueError("noise must be >= 0")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    counts = [n // classes + (1 if c < n % classes else 0) for c in range(classes)]
    latent = np.concatenate(
        [c + SEGMENT_FILL * rng.random(counts[c]) for c in range(classes)]
    )
    labels = [f"c{c}" for c in range(classes) for _ in range(counts[c])]

    direction = rng.standard_normal((AMBIENT_DIM, 1))
    direction /= np.linalg.norm(direction)
    view1 = SIGNAL_SCALE * direction * latent + noise * rng.standard_normal((AMBIENT_DIM, n))

    warped = np.vstack(
        [latent, np.sin(1.9 * latent + 0.4), np.cos(1.3 * latent - 0.2)]
    )
    mixer = rng.standard_normal((AMBIENT_DIM, warped.shape[0]))
    mixer /= np.linalg.norm(mixer, axis=0, keepdims=True)
    view2 = (
        SIGNAL_SCALE / np.sqrt(warped.shape[0]) * (mixer @ warped)
        + noise * rng.standard_normal((AMBIENT_DIM, n))
    )

    atomic_write_matrix(out_dir / "view1.csv", view1)
    atomic_write_matrix(out_dir / "view2.csv", view2)
    atomic_write_text(out_dir / "labels.txt", "\n".join(labels) + "\n")
    manifest = {
        "views": [
            {"name": "view1", "path": "view1.csv"},
            {"name": "view2", "path": "view2.csv"},
        ],
        "labels": "labels.txt",
    }
    return atomic_write_json(out_dir / "manifest.json", manifest)
