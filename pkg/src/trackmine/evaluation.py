"""Discovery-quality metrics: AMI, outlier-fraction curves, dataset statistics."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numba
import numpy as np

from .clustering.base import NOISE, ClusteringResult
from .core import AnnotatedTrack

AVERAGE_METHODS = ("arithmetic", "max")


def contingency_table(truth, pred) -> np.ndarray:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"label vectors differ in length: {truth.size} vs {pred.size}")
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def entropy(labels) -> float:
    """Shannon entropy (nats) of a label vector."""
    counts = np.unique(np.asarray(labels), return_counts=True)[1].astype(np.float64)
    if counts.size <= 1:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_information(table: np.ndarray) -> float:
    table = np.asarray(table, dtype=np.float64)
    n = table.sum()
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    nz = np.nonzero(table)
    nij = table[nz]
    mi = nij / n * (np.log(nij) + math.log(n) - np.log(a[nz[0]]) - np.log(b[nz[1]]))
    return float(max(mi.sum(), 0.0))


@numba.njit(cache=True)
def _emi(a, b, n):
    total = 0.0
    lg_n = math.lgamma(n + 1.0)
    log_n = math.log(n)
    for i in range(a.shape[0]):
        ai = a[i]
        for j in range(b.shape[0]):
            bj = b[j]
            start = max(1, ai + bj - n)
            stop = min(ai, bj)
            base = (math.lgamma(ai + 1.0) + math.lgamma(bj + 1.0)
                    + math.lgamma(n - ai + 1.0) + math.lgamma(n - bj + 1.0) - lg_n)
            for nij in range(start, stop + 1):
                logp = base - (math.lgamma(nij + 1.0) + math.lgamma(ai - nij + 1.0)
                               + math.lgamma(bj - nij + 1.0) + math.lgamma(n - ai - bj + nij + 1.0))
                term = nij / n * (log_n + math.log(nij) - math.log(ai) - math.log(bj))
                total += term * math.exp(logp)
    return total


def expected_mutual_information(table: np.ndarray) -> float:
    """E[MI] under the permutation model (hypergeometric cell counts, fixed margins)."""
    table = np.asarray(table, dtype=np.int64)
    n = int(table.sum())
    return float(_emi(table.sum(axis=1), table.sum(axis=0), n))


def _same_partition(truth, pred) -> bool:
    table = contingency_table(truth, pred)
    return bool(((table > 0).sum(axis=0) == 1).all() and ((table > 0).sum(axis=1) == 1).all())


def ami(truth, pred, average_method: str = "arithmetic") -> float:
    """Adjusted mutual information between two labelings.

    ``(MI - E[MI]) / (avg(H_truth, H_pred) - E[MI])`` with an exact
    expected MI. Identical partitions score exactly 1.0; a single cluster
    against a non-trivial partition scores exactly 0.0. Noise labels must be
    removed by the caller.
    """
    if average_method not in AVERAGE_METHODS:
        raise ValueError(f"average_method must be one of {AVERAGE_METHODS}")
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"label vectors differ in length: {truth.size} vs {pred.size}")
    if truth.size == 0:
        raise ValueError("cannot score empty labelings")
    if _same_partition(truth, pred):
        return 1.0
    if np.unique(truth).size == 1 or np.unique(pred).size == 1:
        return 0.0
    table = contingency_table(truth, pred)
    mi = mutual_information(table)
    emi = expected_mutual_information(table)
    h_t, h_p = entropy(truth), entropy(pred)
    norm = (h_t + h_p) / 2.0 if average_method == "arithmetic" else max(h_t, h_p)
    denom = norm - emi
    eps = np.finfo(np.float64).eps
    denom = min(denom, -eps) if denom < 0 else max(denom, eps)
    return float((mi - emi) / denom)


@dataclass(frozen=True)
class LabeledEvalSet:
    """Aligned per-track columns used for scoring one clustering."""

    ids: tuple
    truth: tuple
    pred: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        pred = np.asarray(self.pred, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if not (len(self.ids) == len(self.truth) == pred.size == scores.size):
            raise ValueError("evaluation columns must have equal length")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "truth", tuple(self.truth))
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_result(cls, result: ClusteringResult, row_ids: Sequence, truth_by_id: dict) -> "LabeledEvalSet":
        """Keep the rows whose id has a ground-truth category, in row order."""
        keep = [i for i, rid in enumerate(row_ids) if rid in truth_by_id]
        return cls(
            ids=tuple(row_ids[i] for i in keep),
            truth=tuple(truth_by_id[row_ids[i]] for i in keep),
            pred=result.assignments[keep],
            scores=result.outlier_score[keep],
        )


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    ami: float
    n_evaluated: int
    distinguished: bool = False

    @property
    def defined(self) -> bool:
        return self.n_evaluated > 0 and not math.isnan(self.ami)


@dataclass(frozen=True)
class EvaluationCurve:
    points: tuple[CurvePoint, ...]
    distinguished_point: Optional[int] = None
    config_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        fr = [p.fraction for p in self.points]
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ValueError("curve fractions must be strictly increasing")

    def to_csv(self) -> str:
        lines = ["fraction,ami,n,distinguished"]
        for p in self.points:
            lines.append(f"{p.fraction:.6g},{p.ami:.10g},{p.n_evaluated},{int(p.distinguished)}")
        return "\n".join(lines) + "\n"


def exclusion_order(evalset: LabeledEvalSet) -> np.ndarray:
    """Indices in the order they are dropped: noise first, then by score (desc), ties by id."""
    from .core import id_key

    keys = [
        (0 if lab == NOISE else 1, -score, id_key(rid))
        for lab, score, rid in zip(evalset.pred, evalset.scores, evalset.ids)
    ]
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.int64)


def _n_excluded(fraction: float, n: int) -> int:
    return min(n, int(math.ceil(fraction * n - 1e-9)))


def _score_remaining(evalset: LabeledEvalSet, keep: np.ndarray, average_method: str) -> float:
    if keep.size == 0:
        return math.nan
    pred = evalset.pred[keep].copy()
    noise = pred == NOISE
    # surviving noise points each count as their own singleton cluster
    if noise.any():
        pred[noise] = pred.max(initial=-1) + 1 + np.arange(noise.sum())
    truth = np.asarray(evalset.truth, dtype=object)[keep]
    return ami(truth.astype(str), pred, average_method)


def outlier_curve(
    evalset: LabeledEvalSet,
    fractions: Iterable[float],
    mark_noise_fraction: bool = True,
    average_method: str = "arithmetic",
) -> EvaluationCurve:
    """AMI after dropping the top ``ceil(f * N)`` most outlying points, for each f.

    Points labelled noise are dropped before any scored point. When the
    labelling contains noise, its own noise fraction is added as the
    distinguished point (AMI over non-noise points).
    """
    fractions = [float(f) for f in fractions]
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in [0, 1]")
    if any(b < a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be sorted ascending")
    fractions = sorted(set(fractions))
    n = len(evalset)
    noise_fraction = float((evalset.pred == NOISE).mean()) if n else 0.0
    distinguished = None
    if mark_noise_fraction and n and noise_fraction > 0:
        if not any(abs(f - noise_fraction) < 1e-12 for f in fractions):
            fractions = sorted(fractions + [noise_fraction])

    order = exclusion_order(evalset)
    points = []
    n_noise = int((evalset.pred == NOISE).sum())
    for f in fractions:
        is_native = mark_noise_fraction and n_noise > 0 and abs(f - noise_fraction) < 1e-12
        dropped = n_noise if is_native else _n_excluded(f, n)
        keep = np.sort(order[dropped:])
        value = _score_remaining(evalset, keep, average_method)
        if is_native:
            distinguished = len(points)
        points.append(CurvePoint(f, value, int(keep.size), is_native))
    meta = {"n": n, "noise_fraction": noise_fraction, "average_method": average_method}
    return EvaluationCurve(tuple(points), distinguished, meta)


def parse_fraction_range(spec: str) -> list[float]:
    """``"0:0.5:0.05"`` -> [0.0, 0.05, ..., 0.5] (end inclusive)."""
    parts = [float(p) for p in spec.split(":")]
    if len(parts) == 1:
        return parts
    if len(parts) != 3 or parts[2] <= 0:
        raise ValueError(f"bad fraction range {spec!r}; expected start:stop:step")
    start, stop, step = parts
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


@dataclass(frozen=True)
class FilterResult:
    retained: tuple[AnnotatedTrack, ...]
    mask: np.ndarray
    excluded: dict

    @property
    def n_excluded(self) -> int:
        return sum(self.excluded.values())


def eval_filter(tracks: Sequence[AnnotatedTrack], min_instances: int = 30) -> FilterResult:
    """Keep category-annotated tracks whose category has at least ``min_instances`` tracks."""
    counts = Counter(t.annotation.category for t in tracks if t.annotation.kind == "category")
    excluded = {"unknown": 0, "tracking_error": 0, "rare_category": 0}
    mask = np.zeros(len(tracks), dtype=bool)
    for i, t in enumerate(tracks):
        kind = t.annotation.kind
        if kind == "unknown":
            excluded["unknown"] += 1
        elif kind == "tracking_error":
            excluded["tracking_error"] += 1
        elif counts[t.annotation.category] < min_instances:
            excluded["rare_category"] += 1
        else:
            mask[i] = True
    retained = tuple(t for t, keep in zip(tracks, mask) if keep)
    return FilterResult(retained, mask, excluded)


@dataclass(frozen=True)
class CategoryDistribution:
    counts: tuple[tuple[str, int], ...]
    cutoff: int = 30
    n_tracks: int = 0
    n_tracking_errors: int = 0
    n_unknown_valid: int = 0
    n_known_label: int = 0
    n_unknown_label: int = 0

    def __post_init__(self):
        values = [c for _, c in self.counts]
        if any(b > a for a, b in zip(values, values[1:])):
            raise ValueError("category counts must be non-increasing")

    @property
    def error_rate(self) -> float:
        return self.n_tracking_errors / self.n_tracks if self.n_tracks else 0.0

    @property
    def head(self) -> tuple[tuple[str, int], ...]:
        return tuple(c for c in self.counts if c[1] >= self.cutoff)

    @property
    def tail(self) -> tuple[tuple[str, int], ...]:
        return tuple(c for c in self.counts if c[1] < self.cutoff)

    def as_dict(self) -> dict:
        return {
            "categories": [{"category": c, "count": n} for c, n in self.counts],
            "cutoff": self.cutoff,
            "n_categories_above_cutoff": len(self.head),
            "n_categories_below_cutoff": len(self.tail),
            "tracks_total": self.n_tracks,
            "tracking_errors": self.n_tracking_errors,
            "tracking_error_rate": self.error_rate,
            "unknown_valid": self.n_unknown_valid,
            "tracker_label_known": self.n_known_label,
            "tracker_label_unknown": self.n_unknown_label,
        }

    def to_text(self) -> str:
        width = max([len(c) for c, _ in self.counts] + [8])
        lines = [f"{'category':<{width}}  {'tracks':>7}"]
        cut_drawn = False
        for name, count in self.counts:
            if count < self.cutoff and not cut_drawn:
                lines.append("-" * (width + 9) + f"  < {self.cutoff}")
                cut_drawn = True
            lines.append(f"{name:<{width}}  {count:>7}")
        lines.append("")
        lines.append(f"tracks total        {self.n_tracks}")
        lines.append(f"tracking errors     {self.n_tracking_errors} ({100 * self.error_rate:.1f}%)")
        lines.append(f"valid unknown       {self.n_unknown_valid}")
        lines.append(f"tracker known/unkn  {self.n_known_label}/{self.n_unknown_label}")
        return "\n".join(lines) + "\n"


def distribution_report(tracks: Sequence[AnnotatedTrack], cutoff: int = 30) -> CategoryDistribution:
    counts = Counter(t.annotation.category for t in tracks if t.annotation.kind == "category")
    ordered = tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return CategoryDistribution(
        counts=ordered,
        cutoff=cutoff,
        n_tracks=len(tracks),
        n_tracking_errors=sum(t.annotation.kind == "tracking_error" for t in tracks),
        n_unknown_valid=sum(t.annotation.kind == "unknown" for t in tracks),
        n_known_label=sum(t.track.label is not None for t in tracks),
        n_unknown_label=sum(t.track.label is None for t in tracks),
    )


@dataclass(frozen=True)
class ClusterRow:
    cluster: int
    size: int
    n_annotated: int
    dominant: Optional[str]
    purity: float
    novel: bool


@dataclass(frozen=True)
class ClusterSummary:
    rows: tuple[ClusterRow, ...]
    min_cluster_display: int
    n_clusters_total: int

    def as_dict(self) -> dict:
        return {
            "min_cluster_display": self.min_cluster_display,
            "n_clusters_total": self.n_clusters_total,
            "clusters": [r.__dict__ for r in self.rows],
        }

    def to_text(self) -> str:
        lines = [f"{'cluster':>7}  {'size':>6}  {'annot':>6}  {'purity':>6}  dominant"]
        for r in self.rows:
            flag = " [novel]" if r.novel else ""
            lines.append(
                f"{r.cluster:>7}  {r.size:>6}  {r.n_annotated:>6}  {r.purity:>6.3f}  {r.dominant or '-'}{flag}"
            )
        return "\n".join(lines) + "\n"


def cluster_report(
    result: ClusteringResult,
    row_ids: Sequence,
    evalset: LabeledEvalSet,
    min_cluster_display: int = 80,
    known_categories: Optional[Iterable[str]] = None,
) -> ClusterSummary:
    """Dominant annotated category of each cluster with its purity, largest cluster first.

    ``size`` counts every clustered track; purity is measured over the
    annotated members only. A cluster is ``novel`` when its dominant
    category is outside ``known_categories``.
    """
    if len(row_ids) != result.assignments.size:
        raise ValueError("row ids must align with the clustering result")
    known = None if known_categories is None else set(known_categories)
    truth_of = dict(zip(evalset.ids, evalset.truth))
    sizes = Counter(int(l) for l in result.assignments if l != NOISE)
    votes: dict[int, Counter] = {c: Counter() for c in sizes}
    for rid, lab in zip(row_ids, result.assignments):
        if lab != NOISE and rid in truth_of:
            votes[int(lab)][truth_of[rid]] += 1
    rows = []
    for c, size in sizes.items():
        v = votes[c]
        annotated = sum(v.values())
        if annotated:
            top = max(v.values())
            dominant = min(name for name, k in v.items() if k == top)
            purity = top / annotated
        else:
            dominant, purity = None, 0.0
        novel = bool(known is not None and dominant is not None and dominant not in known)
        rows.append(ClusterRow(c, size, annotated, dominant, purity, novel))
    rows.sort(key=lambda r: (-r.size, r.cluster))
    shown = tuple(r for r in rows if r.size >= min_cluster_display)
    return ClusterSummary(shown, min_cluster_display, len(rows))
