"""Synthetic long-tail track collections with known ground truth.

Output is a pure function of the ``SyntheticSpec``: per-track randomness is drawn
from ``default_rng([seed, stream, index])`` so the output does not depend
on generation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AnnotatedTrack,
    Annotation,
    BoundingBox,
    EmbeddingMatrix,
    FrameObservation,
    Track,
    Tracklet,
)
from .merge import SelectionTimeline

_CENTERS, _TRACKS, _LAYOUT, _STREAM = 1, 2, 3, 4


@dataclass(frozen=True)
class SyntheticSpec:
    n_categories: int = 36
    zipf_exponent: float = 1.1
    n_tracks: int = 12_000
    embedding_dims: int = 50
    cluster_spread: float = 1.0
    center_separation: float = 100.0
    outlier_fraction: float = 0.0
    tracking_error_fraction: float = 0.0
    seed: int = 0
    known_fraction: float = 0.5
    min_crops: int = 3
    max_crops: int = 30

    def __post_init__(self):
        if self.n_categories < 1 or self.n_tracks < 0 or self.embedding_dims < 1:
            raise ValueError("n_categories and embedding_dims must be positive, n_tracks non-negative")
        if self.zipf_exponent <= 0:
            raise ValueError("zipf_exponent must be > 0")
        if self.cluster_spread <= 0 or self.center_separation <= 0:
            raise ValueError("cluster_spread and center_separation must be > 0")
        if not (0 <= self.outlier_fraction < 1 and 0 <= self.tracking_error_fraction < 1):
            raise ValueError("outlier and tracking-error fractions must lie in [0, 1)")
        if self.outlier_fraction + self.tracking_error_fraction >= 1:
            raise ValueError("outlier_fraction + tracking_error_fraction must be < 1")
        if not 1 <= self.min_crops <= self.max_crops:
            raise ValueError("need 1 <= min_crops <= max_crops")

    @property
    def category_names(self) -> list[str]:
        width = max(2, len(str(self.n_categories - 1)))
        return [f"cat{i:0{width}d}" for i in range(self.n_categories)]

    @property
    def n_outliers(self) -> int:
        return int(round(self.outlier_fraction * self.n_tracks))

    @property
    def n_errors(self) -> int:
        return int(round(self.tracking_error_fraction * self.n_tracks))

    @property
    def n_regular(self) -> int:
        return self.n_tracks - self.n_outliers - self.n_errors


@dataclass(frozen=True)
class SyntheticTruth:
    track_ids: tuple[str, ...]
    category: np.ndarray  # nominal category index per track
    is_outlier: np.ndarray
    is_error: np.ndarray
    centers: np.ndarray
    category_names: tuple[str, ...]
    allocation: tuple[int, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "track_ids": list(self.track_ids),
            "category": self.category.tolist(),
            "is_outlier": self.is_outlier.astype(int).tolist(),
            "is_error": self.is_error.astype(int).tolist(),
            "category_names": list(self.category_names),
            "allocation": list(self.allocation),
            "centers": self.centers.tolist(),
        }


def zipf_allocation(n_items: int, n_categories: int, exponent: float) -> np.ndarray:
    """Integer category sizes proportional to rank**-exponent, by largest remainder."""
    weights = np.arange(1, n_categories + 1, dtype=np.float64) ** -exponent
    quotas = n_items * weights / weights.sum()
    sizes = np.floor(quotas).astype(np.int64)
    short = n_items - int(sizes.sum())
    if short:
        remainder = quotas - sizes
        order = sorted(range(n_categories), key=lambda r: (-remainder[r], r))
        for r in order[:short]:
            sizes[r] += 1
    return sizes


def sample_centers(n: int, dims: int, separation: float, rng, max_tries: int = 2000) -> np.ndarray:
    """Points on the sphere of radius ``separation`` with pairwise gaps >= ``separation``."""
    radius = separation
    centers = np.empty((0, dims))
    for _ in range(n):
        for _ in range(max_tries):
            v = rng.normal(size=dims)
            norm = np.linalg.norm(v)
            if norm == 0:
                continue
            v *= radius / norm
            if centers.shape[0] == 0 or np.min(np.linalg.norm(centers - v, axis=1)) >= separation:
                centers = np.vstack([centers, v])
                break
        else:
            raise ValueError(
                f"cannot place {n} centres {separation} apart on a {dims}-dim sphere; "
                "lower n_categories or raise embedding_dims"
            )
    return centers


def _track_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed & (2**63 - 1), stream, index])


def generate_collection(spec: SyntheticSpec):
    """Return ``(annotated_tracks, crop_embeddings, crop_track_ids, truth)``.

    Regular tracks follow the Zipf allocation exactly. Outlier tracks sit
    uniformly in a box ten times the centre radius and carry a random
    category annotation; tracking-error tracks take their crops from a
    different category's centre.
    """
    names = spec.category_names
    root = _track_rng(spec.seed, _CENTERS, 0)
    centers = sample_centers(spec.n_categories, spec.embedding_dims, spec.center_separation, root)
    allocation = zipf_allocation(spec.n_regular, spec.n_categories, spec.zipf_exponent)
    n_known = int(round(spec.known_fraction * spec.n_categories))

    layout = _track_rng(spec.seed, _LAYOUT, 0)
    kinds = np.concatenate([
        np.zeros(spec.n_regular, dtype=np.int8),
        np.ones(spec.n_outliers, dtype=np.int8),
        np.full(spec.n_errors, 2, dtype=np.int8),
    ])
    regular_cats = np.repeat(np.arange(spec.n_categories), allocation)
    weights = allocation / max(allocation.sum(), 1) if allocation.sum() else np.full(spec.n_categories, 1 / spec.n_categories)
    extra_cats = layout.choice(spec.n_categories, size=spec.n_outliers + spec.n_errors, p=weights)
    categories = np.concatenate([regular_cats, extra_cats])
    perm = layout.permutation(spec.n_tracks)
    kinds, categories = kinds[perm], categories[perm]

    width = max(5, len(str(spec.n_tracks)))
    track_ids = tuple(f"t{i:0{width}d}" for i in range(spec.n_tracks))
    box_radius = 10.0 * spec.center_separation
    annotated, blocks, crop_track = [], [], []
    for i, (tid, kind, cat) in enumerate(zip(track_ids, kinds, categories)):
        rng = _track_rng(spec.seed, _TRACKS, i)
        n_crops = int(rng.integers(spec.min_crops, spec.max_crops + 1))
        if kind == 1:
            base = rng.uniform(-box_radius, box_radius, size=spec.embedding_dims)
            annotation = Annotation("category", names[cat])
        elif kind == 2:
            other = (cat + 1 + int(rng.integers(spec.n_categories - 1))) % spec.n_categories if spec.n_categories > 1 else cat
            base = centers[other]
            annotation = Annotation("tracking_error")
        else:
            base = centers[cat]
            annotation = Annotation("category", names[cat])
        crops = base + rng.normal(scale=spec.cluster_spread, size=(n_crops, spec.embedding_dims))
        blocks.append(crops.astype(np.float32))
        crop_track.extend([tid] * n_crops)

        start = int(rng.integers(0, 1000))
        x0, y0 = rng.uniform(0, 1000, size=2)
        obs = [
            FrameObservation(start + f, BoundingBox(float(x0 + 2 * f), float(y0), 40.0, 30.0))
            for f in range(n_crops)
        ]
        label = names[cat] if (kind != 1 and cat < n_known) else None
        track = Track(id=tid, tracklet_ids=(tid,), observations=obs, label=label)
        annotated.append(AnnotatedTrack(track, annotation))

    data = np.vstack(blocks) if blocks else np.empty((0, spec.embedding_dims), dtype=np.float32)
    counters: dict[str, int] = {}
    crop_ids = []
    for tid in crop_track:
        k = counters.get(tid, 0)
        counters[tid] = k + 1
        crop_ids.append(f"{tid}/{k}")
    embeddings = EmbeddingMatrix(data, tuple(crop_ids))
    truth = SyntheticTruth(
        track_ids=track_ids,
        category=categories.astype(np.int64),
        is_outlier=kinds == 1,
        is_error=kinds == 2,
        centers=centers,
        category_names=tuple(names),
        allocation=tuple(int(a) for a in allocation),
    )
    return annotated, embeddings, tuple(crop_track), truth


def sample_points(spec: SyntheticSpec, n_points: int):
    """One embedding per track straight from the mixture, skipping crops.

    Returns ``(X, category, is_outlier)``; used for scale benchmarks.
    """
    rng = _track_rng(spec.seed, _CENTERS, 0)
    centers = sample_centers(spec.n_categories, spec.embedding_dims, spec.center_separation, rng)
    draw = _track_rng(spec.seed, _TRACKS, 0)
    sizes = zipf_allocation(n_points, spec.n_categories, spec.zipf_exponent)
    cats = np.repeat(np.arange(spec.n_categories), sizes)
    x = centers[cats] + draw.normal(scale=spec.cluster_spread, size=(n_points, spec.embedding_dims))
    n_out = int(round(spec.outlier_fraction * n_points))
    is_outlier = np.zeros(n_points, dtype=bool)
    if n_out:
        idx = draw.choice(n_points, size=n_out, replace=False)
        box = 10.0 * spec.center_separation
        x[idx] = draw.uniform(-box, box, size=(n_out, spec.embedding_dims))
        is_outlier[idx] = True
    return x.astype(np.float32), cats, is_outlier


@dataclass(frozen=True)
class TrackletStream:
    tracklets: tuple[Tracklet, ...]
    timeline: SelectionTimeline
    true_track: dict  # tracklet id -> index of the true track
    junction_lambdas: tuple[float, ...]

    @property
    def n_true_tracks(self) -> int:
        return len(set(self.true_track.values()))


def _cuts(length: int, rate: float, rng, min_segment: int = 2) -> list[int]:
    cuts = []
    last = 0
    for pos in range(min_segment, length - min_segment + 1):
        if pos - last >= min_segment and rng.random() < rate:
            cuts.append(pos)
            last = pos
    return cuts


def generate_tracklet_stream(
    spec: SyntheticSpec,
    fragmentation_rate: float,
    overlap: float = 0.6,
    n_frames: int | None = None,
    min_length: int = 8,
    max_length: int = 60,
) -> TrackletStream:
    """Fragment true tracks into selected tracklets that overlap at each junction.

    Every continuation tracklet also covers at least ``overlap`` of its
    predecessor's frames with identical boxes, so the junction overlap
    ratio is at least ``overlap``. Tracks live in separate image rows and
    never overlap each other.
    """
    if not 0 <= fragmentation_rate < 1:
        raise ValueError("fragmentation_rate must lie in [0, 1)")
    if not 0 <= overlap <= 1:
        raise ValueError("overlap must lie in [0, 1]")
    n_frames = n_frames or max(100, spec.n_tracks) + max_length
    names = spec.category_names
    tracklets: list[Tracklet] = []
    selection: dict[int, list[int]] = {f: [] for f in range(n_frames)}
    true_track: dict = {}
    lambdas: list[float] = []
    next_id = 0
    for t in range(spec.n_tracks):
        rng = _track_rng(spec.seed, _STREAM, t)
        length = int(rng.integers(min_length, max_length + 1))
        start = int(rng.integers(0, n_frames - length + 1))
        x0 = float(rng.uniform(0, 500))
        lane = 50.0 * t
        cat = int(rng.integers(spec.n_categories))
        label = names[cat] if rng.random() < spec.known_fraction else None

        def box(f):
            return BoundingBox(x0 + 3.0 * (f - start), lane, 40.0, 30.0)

        bounds = [0] + _cuts(length, fragmentation_rate, rng) + [length]
        prev_span = None
        for k in range(len(bounds) - 1):
            sel_lo, sel_hi = start + bounds[k], start + bounds[k + 1]
            lo = sel_lo
            if prev_span is not None:
                prev_len = prev_span[1] - prev_span[0]
                back = min(prev_len, int(math.ceil(overlap * prev_len)))
                lo = sel_lo - back
                this_len = sel_hi - lo
                lambdas.append(back / min(prev_len, this_len))
            obs = [FrameObservation(f, box(f)) for f in range(lo, sel_hi)]
            tracklets.append(Tracklet(next_id, obs, classifier_label=label))
            true_track[next_id] = t
            for f in range(sel_lo, sel_hi):
                selection[f].append(next_id)
            prev_span = (lo, sel_hi)
            next_id += 1
    timeline = SelectionTimeline({f: tuple(ids) for f, ids in selection.items()})
    return TrackletStream(tuple(tracklets), timeline, true_track, tuple(lambdas))


def write_collection(out_dir, spec: SyntheticSpec, fragmentation_rate: float | None = None) -> dict:
    """Write a generated collection in the standard file layout.

    Produces tracks, annotations, crop embeddings, ``truth.json`` and
    ``spec.json``; with ``fragmentation_rate`` also a tracklet stream,
    its timeline and ``stream_truth.json`` in the ``stream/`` subdirectory
    (the stream is independent of the collection). Returns the written paths.
    """
    from dataclasses import asdict
    from pathlib import Path

    from . import io

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    annotated, crops, _, truth = generate_collection(spec)
    paths = {
        "tracks": out / io.TRACKS_FILE,
        "annotations": out / io.ANNOTATIONS_FILE,
        "crops": out / io.CROPS_FILE,
        "truth": out / "truth.json",
        "spec": out / "spec.json",
    }
    io.write_tracks(paths["tracks"], (a.track for a in annotated))
    io.write_annotations(paths["annotations"], ((a.track.id, a.annotation) for a in annotated))
    io.write_embeddings(paths["crops"], crops)
    io.write_json(paths["truth"], truth.as_dict())
    io.write_json(paths["spec"], asdict(spec))
    if fragmentation_rate is not None:
        stream = generate_tracklet_stream(spec, fragmentation_rate)
        sdir = out / "stream"
        sdir.mkdir(exist_ok=True)
        paths["tracklets"] = sdir / io.TRACKLETS_FILE
        paths["timeline"] = sdir / io.TIMELINE_FILE
        paths["stream_truth"] = sdir / "stream_truth.json"
        io.write_tracklets(paths["tracklets"], stream.tracklets)
        io.write_timeline(paths["timeline"], stream.timeline)
        io.write_json(paths["stream_truth"], {
            "true_track": {str(k): v for k, v in stream.true_track.items()},
            "n_true_tracks": stream.n_true_tracks,
            "junction_lambdas": list(stream.junction_lambdas),
        })
    return paths
