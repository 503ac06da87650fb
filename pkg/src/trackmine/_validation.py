"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np

from .core import EmbeddingMatrix


def as_matrix(data, dtype=np.float64, min_rows: int = 1) -> np.ndarray:
    """Coerce ``data`` to a finite, C-contiguous 2-d array."""
    if isinstance(data, EmbeddingMatrix):
        data = data.data
    x = np.asarray(data)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {x.shape}")
    if x.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {x.shape[0]}")
    x = np.ascontiguousarray(x, dtype=dtype)
    if not np.isfinite(x).all():
        raise ValueError("input contains NaN or infinite values")
    return x


def as_float_matrix(data, min_rows: int = 1) -> np.ndarray:
    """Like :func:`as_matrix` but keeps float32 input as float32."""
    if isinstance(data, EmbeddingMatrix):
        data = data.data
    dtype = np.float32 if getattr(data, "dtype", None) == np.float32 else np.float64
    return as_matrix(data, dtype=dtype, min_rows=min_rows)


def check_seed(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(None if seed is None else int(seed) & (2**64 - 1))
