"""Domain types shared by every stage of the pipeline.

Masks come in two flavours: run-length encoded pixel masks on a fixed
canvas and axis-aligned boxes. Both are immutable; the ``validate_*``
helpers report invariant violations instead of raising, so that ingestion
can collect every problem in a file before deciding what to do.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

TrackletId = Union[int, str]


def id_key(value: TrackletId) -> tuple:
    """Sort key giving a total order over mixed int/str identifiers."""
    if isinstance(value, (int, np.integer)):
        return (0, int(value), "")
    return (1, 0, str(value))


@dataclass(frozen=True)
class RleMask:
    """Binary mask stored as alternating background/foreground run lengths.

    Runs start with background and are laid out row-major, so
    ``runs=(3, 2)`` on a 5x1 canvas marks pixels 3 and 4.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))

    @property
    def area(self) -> int:
        return int(sum(self.runs[1::2]))

    def intervals(self) -> np.ndarray:
        """Foreground spans as ``(start, stop)`` flat pixel offsets."""
        runs = np.asarray(self.runs, dtype=np.int64)
        if runs.size == 0:
            return np.empty((0, 2), dtype=np.int64)
        ends = np.cumsum(runs)
        starts = ends - runs
        spans = np.stack([starts[1::2], ends[1::2]], axis=1)
        return spans[spans[:, 1] > spans[:, 0]]

    def to_array(self) -> np.ndarray:
        values = np.zeros(len(self.runs), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, self.runs)
        return flat.reshape(self.height, self.width)

    @classmethod
    def from_array(cls, mask: np.ndarray) -> "RleMask":
        mask = np.asarray(mask, dtype=bool)
        height, width = mask.shape
        flat = mask.ravel()
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        runs = list(np.diff(bounds))
        if flat.size and flat[0]:
            runs.insert(0, 0)
        return cls(width, height, tuple(int(r) for r in runs))


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)

    def raster_intervals(self, width: int, height: int) -> np.ndarray:
        """Pixels whose centres fall inside ``[x, x+w) x [y, y+h)``."""
        c0 = max(int(np.ceil(self.x - 0.5)), 0)
        c1 = min(int(np.ceil(self.x + self.w - 0.5)), width)
        r0 = max(int(np.ceil(self.y - 0.5)), 0)
        r1 = min(int(np.ceil(self.y + self.h - 0.5)), height)
        if c1 <= c0 or r1 <= r0:
            return np.empty((0, 2), dtype=np.int64)
        rows = np.arange(r0, r1, dtype=np.int64) * width
        return np.stack([rows + c0, rows + c1], axis=1)


MaskGeometry = Union[RleMask, BoundingBox]


@dataclass(frozen=True)
class FrameObservation:
    frame_index: int
    geometry: MaskGeometry
    proposal_score: Optional[float] = None


@dataclass(frozen=True)
class Tracklet:
    id: TrackletId
    observations: tuple[FrameObservation, ...]
    classifier_label: Optional[str] = None
    classifier_confidence: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def frames(self) -> tuple[int, ...]:
        return tuple(o.frame_index for o in self.observations)

    def by_frame(self) -> dict[int, MaskGeometry]:
        return {o.frame_index: o.geometry for o in self.observations}


@dataclass(frozen=True)
class Track:
    """A chain of merged tracklets.

    ``label`` is a category name for known objects and ``None`` for
    unknown ones. ``junction_lambdas[i]`` is the overlap ratio recorded
    when ``tracklet_ids[i + 1]`` continued the track.
    """

    id: TrackletId
    tracklet_ids: tuple[TrackletId, ...]
    observations: tuple[FrameObservation, ...]
    label: Optional[str] = None
    junction_lambdas: tuple[float, ...] = ()
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "tracklet_ids", tuple(self.tracklet_ids))
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "junction_lambdas", tuple(float(v) for v in self.junction_lambdas))

    @property
    def is_unknown(self) -> bool:
        return self.label is None


ANNOTATION_KINDS = ("category", "unknown", "tracking_error")


@dataclass(frozen=True)
class Annotation:
    kind: str
    category: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ANNOTATION_KINDS:
            raise ValueError(f"unknown annotation kind {self.kind!r}")
        if (self.kind == "category") != (self.category is not None):
            raise ValueError("category annotations need a name, others must not have one")

    @classmethod
    def parse(cls, text: str) -> "Annotation":
        text = text.strip()
        if text.startswith("category:"):
            name = text[len("category:"):]
            if not name:
                raise ValueError("empty category name")
            return cls("category", name)
        if text in ("unknown", "tracking_error"):
            return cls(text)
        raise ValueError(f"cannot parse annotation {text!r}")

    def __str__(self) -> str:
        return f"category:{self.category}" if self.kind == "category" else self.kind


@dataclass(frozen=True)
class AnnotatedTrack:
    track: Track
    annotation: Annotation


@dataclass(frozen=True)
class EmbeddingMatrix:
    """``rows x dims`` float32 feature matrix with one id per row."""

    data: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError(f"embedding data must be 2-d, got shape {data.shape}")
        if len(self.row_ids) != data.shape[0]:
            raise ValueError(f"{len(self.row_ids)} row ids for {data.shape[0]} rows")
        if not np.isfinite(data).all():
            raise ValueError("embedding data contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_array(cls, data, row_ids: Optional[Sequence] = None) -> "EmbeddingMatrix":
        data = np.asarray(data)
        if row_ids is None:
            row_ids = [str(i) for i in range(data.shape[0])]
        return cls(data, tuple(row_ids))


def validate_geometry(g: MaskGeometry) -> list[str]:
    problems = []
    if isinstance(g, RleMask):
        if g.width < 0 or g.height < 0:
            problems.append("negative canvas size")
        if any(r < 0 for r in g.runs):
            problems.append("negative run length")
        if sum(g.runs) != g.width * g.height:
            problems.append(
                f"run-length sum mismatch: {sum(g.runs)} != {g.width}x{g.height}"
            )
    elif isinstance(g, BoundingBox):
        values = (g.x, g.y, g.w, g.h)
        if not all(np.isfinite(v) for v in values):
            problems.append("non-finite box coordinate")
        elif g.w < 0 or g.h < 0:
            problems.append("negative box extent")
    else:
        problems.append(f"unsupported geometry type {type(g).__name__}")
    return problems


def validate_tracklet(t: Tracklet) -> list[str]:
    """Return a list of invariant violations; an empty list means valid."""
    problems = []
    if len(t.observations) == 0:
        problems.append("empty tracklet")
    frames = [o.frame_index for o in t.observations]
    if any(f < 0 for f in frames):
        problems.append("negative frame index")
    if len(set(frames)) != len(frames):
        problems.append("duplicate frame index")
    if any(b <= a for a, b in zip(frames, frames[1:])) and len(set(frames)) == len(frames):
        problems.append("not sorted by frame index")
    for obs in t.observations:
        for p in validate_geometry(obs.geometry):
            problems.append(f"frame {obs.frame_index}: {p}")
        s = obs.proposal_score
        if s is not None and not 0.0 <= s <= 1.0:
            problems.append(f"frame {obs.frame_index}: proposal score outside [0, 1]")
    c = t.classifier_confidence
    if c is not None and not 0.0 <= c <= 1.0:
        problems.append("classifier confidence outside [0, 1]")
    return problems


def _intervals_overlap(a: np.ndarray, b: np.ndarray) -> int:
    """Total length shared by two sorted, disjoint interval lists."""
    i = j = 0
    total = 0
    while i < len(a) and j < len(b):
        lo = max(a[i, 0], b[j, 0])
        hi = min(a[i, 1], b[j, 1])
        if hi > lo:
            total += hi - lo
        if a[i, 1] < b[j, 1]:
            i += 1
        else:
            j += 1
    return int(total)


def _span_area(spans: np.ndarray) -> int:
    return int((spans[:, 1] - spans[:, 0]).sum()) if len(spans) else 0


def mask_iou(a: MaskGeometry, b: MaskGeometry) -> float:
    """Intersection over union of two masks; 0.0 when both are empty.

    A box paired with an RLE mask is rasterised onto the mask's canvas.
    """
    if isinstance(a, BoundingBox) and isinstance(b, BoundingBox):
        iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
        ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
        # (x + w) - x can exceed w by an ulp; keep the overlap inside both boxes
        inter = min(max(iw, 0.0), a.w, b.w) * min(max(ih, 0.0), a.h, b.h)
        union = a.area + b.area - inter
        return min(1.0, float(inter / union)) if union > 0 else 0.0

    if isinstance(a, RleMask) and isinstance(b, RleMask):
        if (a.width, a.height) != (b.width, b.height):
            raise ValueError(
                f"canvas mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
            )
        sa, sb = a.intervals(), b.intervals()
    elif isinstance(a, RleMask):
        sa, sb = a.intervals(), b.raster_intervals(a.width, a.height)
    elif isinstance(b, RleMask):
        sa, sb = a.raster_intervals(b.width, b.height), b.intervals()
    else:
        raise TypeError(f"unsupported geometry pair {type(a).__name__}, {type(b).__name__}")

    inter = _intervals_overlap(sa, sb)
    union = _span_area(sa) + _span_area(sb) - inter
    return inter / union if union > 0 else 0.0
