"""Atomic file writers with deterministic formatting."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.17g"


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_matrix(path, matrix: np.ndarray, fmt: str = FLOAT_FORMAT) -> Path:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [",".join(fmt % value for value in row) for row in matrix]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_json(path, payload) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
