"""Per-track summary vectors and PCA reduction of embedding matrices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix
from .core import EmbeddingMatrix

SUMMARY_MODES = ("closest-to-mean", "mean")


@dataclass(frozen=True)
class TrackEmbedding:
    track_id: Hashable
    vector: np.ndarray
    source_crop_index: int  # -1 when the vector is a plain mean


def representative_embedding(crops, track_id=None, mode: str = "closest-to-mean") -> TrackEmbedding:
    """Pick the crop embedding nearest (Euclidean) to the mean crop embedding.

    The returned vector is a verbatim copy of an input row; ties go to the
    lowest row index. ``mode="mean"`` returns the mean itself instead.
    """
    if isinstance(crops, EmbeddingMatrix):
        crops = crops.data
    crops = np.asarray(crops)
    if crops.ndim != 2 or crops.shape[0] == 0:
        raise ValueError("need at least one crop embedding row")
    mean = crops.mean(axis=0, dtype=np.float64)
    if mode == "mean":
        return TrackEmbedding(track_id, mean.astype(crops.dtype), -1)
    if mode != "closest-to-mean":
        raise ValueError(f"unknown summary mode {mode!r}")
    diff = crops.astype(np.float64) - mean
    sq = np.einsum("ij,ij->i", diff, diff)
    idx = int(np.argmin(sq))
    return TrackEmbedding(track_id, crops[idx].copy(), idx)


def summarize_tracks(
    crops: EmbeddingMatrix, crop_track_ids: Sequence[Hashable], mode: str = "closest-to-mean"
) -> EmbeddingMatrix:
    """Group crop rows by track id and emit one representative row per track.

    Output rows follow the first appearance of each track id.
    """
    if len(crop_track_ids) != crops.rows:
        raise ValueError("one track id per crop row required")
    groups: dict = {}
    for i, tid in enumerate(crop_track_ids):
        groups.setdefault(tid, []).append(i)
    rows = [
        representative_embedding(crops.data[idx], tid, mode).vector for tid, idx in groups.items()
    ]
    data = np.vstack(rows) if rows else np.empty((0, crops.dims), dtype=np.float32)
    return EmbeddingMatrix(data, tuple(str(t) for t in groups))


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def dims(self) -> int:
        return self.components.shape[1]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), pivots])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def pca_fit(data, k: int = 50) -> PcaModel:
    """Fit principal axes by eigendecomposition of the sample covariance.

    Covariance uses the 1/(N-1) normalisation. Components are ordered by
    decreasing variance and signed so their largest-magnitude entry is
    positive.
    """
    x = as_matrix(data, dtype=np.float64, min_rows=2)
    n, d = x.shape
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} outside [1, {min(n - 1, d)}] for {n}x{d} data")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1][:k]
    components = _fix_signs(vectors[:, order].T)
    variance = np.clip(values[order], 0.0, None)
    return PcaModel(mean=mean, components=components, explained_variance=variance)


def pca_transform(model: PcaModel, data) -> np.ndarray:
    x = as_matrix(data, dtype=np.float64)
    if x.shape[1] != model.dims:
        raise ValueError(f"data has {x.shape[1]} dims, model expects {model.dims}")
    return (x - model.mean) @ model.components.T


def pca_inverse_transform(model: PcaModel, reduced) -> np.ndarray:
    reduced = np.asarray(reduced, dtype=np.float64)
    return reduced @ model.components + model.mean


class PCA(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`pca_fit` / :func:`pca_transform`."""

    def __init__(self, n_components: int = 50):
        self.n_components = n_components

    def fit(self, X, y=None):
        self.model_ = pca_fit(X, self.n_components)
        self.components_ = self.model_.components
        self.mean_ = self.model_.mean
        self.explained_variance_ = self.model_.explained_variance
        self.n_features_in_ = self.model_.dims
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return pca_transform(self.model_, X)

    def inverse_transform(self, X):
        check_is_fitted(self, "model_")
        return pca_inverse_transform(self.model_, X)
