from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NOISE = -1


@dataclass(frozen=True)
class ClusteringResult:
    """Per-point labels (``-1`` = noise) and outlier scores (higher = more outlying)."""

    assignments: np.ndarray
    outlier_score: np.ndarray
    n_clusters: int
    algorithm_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.assignments, dtype=np.int64)
        scores = np.asarray(self.outlier_score, dtype=np.float64)
        if labels.shape != scores.shape:
            raise ValueError("assignments and outlier scores must align")
        present = np.unique(labels[labels >= 0])
        if not np.array_equal(present, np.arange(self.n_clusters)):
            raise ValueError("non-negative labels must be exactly 0..n_clusters-1")
        if np.any(labels < NOISE):
            raise ValueError("labels below -1 are not allowed")
        labels.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "assignments", labels)
        object.__setattr__(self, "outlier_score", scores)

    @property
    def noise_mask(self) -> np.ndarray:
        return self.assignments == NOISE

    @property
    def noise_fraction(self) -> float:
        return float(self.noise_mask.mean()) if self.assignments.size else 0.0


def relabel_dense(labels) -> np.ndarray:
    """Map non-negative labels onto 0..k-1 in order of first appearance."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full_like(labels, NOISE)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        if lab < 0:
            continue
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out
