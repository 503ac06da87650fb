"""Hierarchical density-based clustering with GLOSH outlier scores.

Stages: core distances -> mutual-reachability MST -> single-linkage
dendrogram -> condensed tree (``min_cluster_size``) -> excess-of-mass
cluster selection -> labels and outlier scores.

The condensed tree uses the usual array layout: one row per
``(parent, child, lambda, child_size)`` with ``lambda = 1 / distance``.
Children below ``n`` are points, the rest are clusters; the root cluster
is ``n`` and a parent's label is always smaller than its children's.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .._validation import as_float_matrix, as_matrix
from .base import NOISE, ClusteringResult, relabel_dense
from .distance import core_distances
from .mst import MST_ALGORITHMS, mutual_reachability_mst, single_linkage_tree

CONDENSED_DTYPE = np.dtype(
    [("parent", np.int64), ("child", np.int64), ("lambda_val", np.float64), ("child_size", np.int64)]
)


@dataclass(frozen=True)
class HdbscanConfig:
    min_cluster_size: int = 30
    min_samples: Optional[int] = None
    seed: int = 0
    mst_algorithm: str = "auto"
    engine: str = "numba"

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples is not None and self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.mst_algorithm not in MST_ALGORITHMS:
            raise ValueError(f"mst_algorithm must be one of {MST_ALGORITHMS}")

    @property
    def effective_min_samples(self) -> int:
        return self.min_cluster_size if self.min_samples is None else self.min_samples


def _lambda(height: float) -> float:
    return 1.0 / height if height > 0 else np.inf


def condense_tree(linkage: np.ndarray, n: int, min_cluster_size: int) -> np.ndarray:
    """Collapse a dendrogram into the tree of clusters of size >= ``min_cluster_size``.

    Splits where one side is smaller than the minimum are read as points
    falling out of the surviving cluster rather than as new clusters.
    Consecutive merges at the same height are treated as a single split
    into all of their parts, so tie order in the dendrogram cannot create
    clusters that are born and die at the same lambda.
    """
    rows: list[tuple] = []
    if n < 2:
        return np.array(rows, dtype=CONDENSED_DTYPE)
    left = linkage[:, 0].astype(np.int64)
    right = linkage[:, 1].astype(np.int64)
    height = linkage[:, 2]
    sizes = linkage[:, 3].astype(np.int64)

    def size(node):
        return 1 if node < n else sizes[node - n]

    def points_under(node):
        if node < n:
            return [node]
        out, stack = [], [node]
        while stack:
            cur = stack.pop()
            if cur < n:
                out.append(cur)
            else:
                stack.append(right[cur - n])
                stack.append(left[cur - n])
        return out

    def components(node):
        # merges at exactly the same height form one multi-way split
        h = height[node - n]
        out, stack = [], [right[node - n], left[node - n]]
        while stack:
            cur = stack.pop()
            if cur >= n and height[cur - n] == h:
                stack.append(right[cur - n])
                stack.append(left[cur - n])
            else:
                out.append(cur)
        return out

    root = 2 * n - 2
    label = {root: n}
    next_label = n + 1
    queue = deque([root])
    while queue:
        node = queue.popleft()
        parent_label = label[node]
        lam = _lambda(height[node - n])
        kids = components(node)
        big = [size(k) >= min_cluster_size for k in kids]
        if sum(big) >= 2:
            for kid in (k for k, b in zip(kids, big) if b):
                label[kid] = next_label
                rows.append((parent_label, next_label, lam, size(kid)))
                next_label += 1
                queue.append(kid)
            for kid in (k for k, b in zip(kids, big) if not b):
                rows.extend((parent_label, p, lam, 1) for p in sorted(points_under(kid)))
            continue
        for kid, is_big in zip(kids, big):
            if is_big:
                label[kid] = parent_label
                queue.append(kid)
            else:
                rows.extend((parent_label, p, lam, 1) for p in sorted(points_under(kid)))
    return np.array(rows, dtype=CONDENSED_DTYPE)


def compute_stability(tree: np.ndarray, n: int) -> dict[int, float]:
    """Excess of mass per cluster: sum over members of (lambda_exit - lambda_birth)."""
    births = {n: 0.0}
    for row in tree[tree["child"] >= n]:
        births[int(row["child"])] = float(row["lambda_val"])
    stability = dict.fromkeys(births, 0.0)
    for parent, lam, count in zip(tree["parent"], tree["lambda_val"], tree["child_size"]):
        birth = births[int(parent)]
        gain = 0.0 if lam == birth else (lam - birth)
        stability[int(parent)] += gain * int(count)
    return stability


def select_clusters_eom(tree: np.ndarray, stability: dict[int, float], n: int) -> list[int]:
    """Excess-of-mass selection: keep a cluster unless its children are jointly more stable.

    The root is never selected.
    """
    cluster_rows = tree[tree["child"] >= n]
    children: dict[int, list[int]] = {c: [] for c in stability}
    for parent, child in zip(cluster_rows["parent"], cluster_rows["child"]):
        children[int(parent)].append(int(child))

    best = dict(stability)
    selected = {c: True for c in stability if c != n}
    for node in sorted(stability, reverse=True):
        if node == n:
            continue
        subtree = sum(best[c] for c in children[node])
        if subtree > best[node]:
            selected[node] = False
            best[node] = subtree
        else:
            stack = list(children[node])
            while stack:
                c = stack.pop()
                selected[c] = False
                stack.extend(children[c])
    return sorted(c for c, keep in selected.items() if keep)


def label_points(tree: np.ndarray, selected: list[int], n: int) -> np.ndarray:
    labels = np.full(n, NOISE, dtype=np.int64)
    if len(tree) == 0:
        return labels
    dense = {c: i for i, c in enumerate(selected)}
    parent_of = {n: None}
    cluster_rows = tree[tree["child"] >= n]
    for parent, child in zip(cluster_rows["parent"], cluster_rows["child"]):
        parent_of[int(child)] = int(parent)
    owner: dict[int, Optional[int]] = {}
    for c in sorted(parent_of):
        up = parent_of[c]
        owner[c] = dense[c] if c in dense else (owner[up] if up is not None else None)
    point_rows = tree[tree["child"] < n]
    for parent, child in zip(point_rows["parent"], point_rows["child"]):
        lab = owner[int(parent)]
        if lab is not None:
            labels[int(child)] = lab
    return labels


def glosh_scores(tree: np.ndarray, n: int) -> np.ndarray:
    """GLOSH: 1 - lambda_exit(p) / lambda_max(C), C the cluster p last belonged to."""
    scores = np.zeros(n)
    if len(tree) == 0:
        return scores
    deaths: dict[int, float] = {}
    for parent, lam in zip(tree["parent"], tree["lambda_val"]):
        deaths[int(parent)] = max(deaths.get(int(parent), 0.0), float(lam))
    cluster_rows = tree[tree["child"] >= n]
    order = np.argsort(cluster_rows["child"])[::-1]
    for row in cluster_rows[order]:
        child, parent = int(row["child"]), int(row["parent"])
        deaths[parent] = max(deaths.get(parent, 0.0), deaths.get(child, 0.0))
    for parent, child, lam in zip(tree["parent"], tree["child"], tree["lambda_val"]):
        if child >= n:
            continue
        lmax = deaths[int(parent)]
        if lmax == 0.0 or not np.isfinite(lam):
            s = 0.0
        elif not np.isfinite(lmax):
            s = 1.0
        else:
            s = (lmax - lam) / lmax
        scores[int(child)] = s
    return scores


class HdbscanTrace(NamedTuple):
    core_distances: np.ndarray
    mst: tuple
    linkage: np.ndarray
    condensed_tree: np.ndarray
    stability: dict
    selected: list
    result: ClusteringResult


def hdbscan_trace(data, cfg: HdbscanConfig = HdbscanConfig()) -> HdbscanTrace:
    """Run the full pipeline and keep every intermediate stage."""
    x = as_float_matrix(data)
    n = x.shape[0]
    min_samples = cfg.effective_min_samples
    core = core_distances(x, min_samples, engine=cfg.engine)
    if n >= 2:
        mst = mutual_reachability_mst(x, core, cfg.mst_algorithm)
        linkage = single_linkage_tree(*mst, n)
    else:
        mst = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
        linkage = np.empty((0, 4))
    tree = condense_tree(linkage, n, cfg.min_cluster_size)
    stability = compute_stability(tree, n) if n >= 2 else {}
    selected = select_clusters_eom(tree, stability, n) if n >= 2 else []
    # number clusters by their lowest member so the MST route cannot matter
    labels = relabel_dense(label_points(tree, selected, n))
    scores = glosh_scores(tree, n)
    meta = {
        "algorithm": "hdbscan",
        "min_cluster_size": cfg.min_cluster_size,
        "min_samples": min_samples,
        "mst_algorithm": "prim" if cfg.mst_algorithm == "auto" else cfg.mst_algorithm,
        "seed": cfg.seed,
        "noise_fraction": float((labels == NOISE).mean()) if n else 0.0,
    }
    result = ClusteringResult(labels, scores, len(selected), meta)
    return HdbscanTrace(core, mst, linkage, tree, stability, selected, result)


def hdbscan_fit(data, cfg: HdbscanConfig = HdbscanConfig()) -> ClusteringResult:
    """Cluster rows by Euclidean density; noise gets label -1.

    Fewer rows than ``min_cluster_size`` is not an error: no cluster can
    form, so every point comes back as noise.
    """
    return hdbscan_trace(data, cfg).result


class HDBSCAN(ClusterMixin, BaseEstimator):
    def __init__(self, min_cluster_size=30, min_samples=None, mst_algorithm="auto", engine="numba"):
        self.min_cluster_size = min_cluster_size
        self.min_samples = min_samples
        self.mst_algorithm = mst_algorithm
        self.engine = engine

    def fit(self, X, y=None):
        cfg = HdbscanConfig(
            min_cluster_size=self.min_cluster_size,
            min_samples=self.min_samples,
            mst_algorithm=self.mst_algorithm,
            engine=self.engine,
        )
        trace = hdbscan_trace(X, cfg)
        self.result_ = trace.result
        self.labels_ = np.array(trace.result.assignments)
        self.outlier_scores_ = np.array(trace.result.outlier_score)
        self.core_distances_ = trace.core_distances
        self.condensed_tree_ = trace.condensed_tree
        self.single_linkage_tree_ = trace.linkage
        self.n_features_in_ = as_matrix(X).shape[1]
        return self
