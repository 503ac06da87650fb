"""Readers and writers for the on-disk interchange formats.

Track-like records and the selection timeline are JSON lines; embeddings
use a small binary container (``EMB1``); annotations and clustering
results are CSV. Every reader reports problems as :class:`DataError` with
the line number and byte offset of the offending record. In validation
mode (``strict=False``) bad lines are collected and skipped while the rest
of the file still parses.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .clustering.base import ClusteringResult
from .core import (
    AnnotatedTrack,
    Annotation,
    BoundingBox,
    EmbeddingMatrix,
    FrameObservation,
    RleMask,
    Track,
    Tracklet,
    validate_tracklet,
)
from .embedding import PcaModel
from .merge import SelectionTimeline

EMB_MAGIC = b"EMB1"
_EMB_HEADER = struct.Struct("<4sQQ")

TRACKS_FILE = "tracks.jsonl"
TRACKLETS_FILE = "tracklets.jsonl"
TIMELINE_FILE = "timeline.jsonl"
ANNOTATIONS_FILE = "annotations.csv"
CROPS_FILE = "crops.emb"
EMBEDDINGS_FILE = "embeddings.emb"
META_FILE = "meta.json"


class DataError(Exception):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, path=None, line: Optional[int] = None, offset: Optional[int] = None):
        self.message = message
        self.path = None if path is None else str(path)
        self.line = line
        self.offset = offset
        super().__init__(str(self))

    def __str__(self) -> str:
        where = []
        if self.path:
            where.append(self.path)
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.offset is not None:
            where.append(f"byte {self.offset}")
        return f"{', '.join(where)}: {self.message}" if where else self.message


# ---------------------------------------------------------------- geometry

def geometry_to_json(g) -> dict:
    if isinstance(g, RleMask):
        return {"rle": {"w": g.width, "h": g.height, "runs": list(g.runs)}}
    if isinstance(g, BoundingBox):
        return {"box": [g.x, g.y, g.w, g.h]}
    raise TypeError(f"unsupported geometry {type(g).__name__}")


def geometry_from_json(obj):
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError("geometry must be an object with exactly one of 'rle' or 'box'")
    if "rle" in obj:
        r = obj["rle"]
        if not isinstance(r, dict) or not {"w", "h", "runs"} <= set(r):
            raise ValueError("rle geometry needs w, h and runs")
        runs = r["runs"]
        if not isinstance(runs, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in runs):
            raise ValueError("rle runs must be a list of integers")
        return RleMask(_int(r["w"], "w"), _int(r["h"], "h"), tuple(runs))
    if "box" in obj:
        b = obj["box"]
        if not isinstance(b, list) or len(b) != 4 or not all(_is_number(v) for v in b):
            raise ValueError("box geometry must be [x, y, w, h]")
        return BoundingBox(*(float(v) for v in b))
    raise ValueError(f"unknown geometry kind {next(iter(obj))!r}")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v, name: str) -> int:
    if not isinstance(v, int) or isinstance(v, bool):
        raise ValueError(f"{name} must be an integer")
    return v


def _id(v, name: str = "id"):
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise ValueError(f"{name} must be an integer or a string")
    return v


def _observations_to_json(observations) -> list:
    out = []
    for o in observations:
        item = {"frame": o.frame_index, "geometry": geometry_to_json(o.geometry)}
        if o.proposal_score is not None:
            item["score"] = o.proposal_score
        out.append(item)
    return out


def _observations_from_json(items) -> list:
    if not isinstance(items, list):
        raise ValueError("observations must be a list")
    out = []
    for item in items:
        if not isinstance(item, dict) or "frame" not in item or "geometry" not in item:
            raise ValueError("each observation needs frame and geometry")
        score = item.get("score")
        if score is not None and not _is_number(score):
            raise ValueError("observation score must be a number")
        out.append(FrameObservation(_int(item["frame"], "frame"), geometry_from_json(item["geometry"]), score))
    return out


# ---------------------------------------------------------------- JSON lines

def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def iter_jsonl(path, parse: Callable[[dict], object], strict: bool = True, errors: Optional[list] = None):
    """Yield ``parse(obj)`` per non-blank line.

    With ``strict`` the first bad line raises :class:`DataError`; otherwise
    the error is appended to ``errors`` and parsing continues.
    """
    path = Path(path)
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            start = offset
            offset += len(raw)
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw.decode("utf-8"))
                if not isinstance(obj, dict):
                    raise ValueError("expected a JSON object")
                item = parse(obj)
            except (ValueError, TypeError, KeyError, UnicodeDecodeError) as exc:
                err = DataError(str(exc) or type(exc).__name__, path, lineno, start)
                if strict:
                    raise err from exc
                if errors is not None:
                    errors.append(err)
                continue
            yield item


def tracklet_to_json(t: Tracklet) -> dict:
    obj = {"id": t.id, "observations": _observations_to_json(t.observations)}
    if t.classifier_label is not None:
        obj["classifier_label"] = t.classifier_label
    if t.classifier_confidence is not None:
        obj["classifier_confidence"] = t.classifier_confidence
    return obj


def tracklet_from_json(obj: dict) -> Tracklet:
    label = obj.get("classifier_label")
    if label is not None and not isinstance(label, str):
        raise ValueError("classifier_label must be a string")
    conf = obj.get("classifier_confidence")
    if conf is not None and not _is_number(conf):
        raise ValueError("classifier_confidence must be a number")
    t = Tracklet(_id(obj["id"]), _observations_from_json(obj["observations"]), label, conf)
    problems = validate_tracklet(t)
    if problems:
        raise ValueError("; ".join(problems))
    return t


_TRACK_KEYS = {"id", "label", "tracklet_ids", "observations", "junction_lambdas"}


def track_to_json(t: Track) -> dict:
    obj = {
        "id": t.id,
        "label": t.label,
        "tracklet_ids": list(t.tracklet_ids),
        "observations": _observations_to_json(t.observations),
    }
    if t.junction_lambdas:
        obj["junction_lambdas"] = list(t.junction_lambdas)
    for key, value in t.extra.items():
        if key not in obj:
            obj[key] = value
    return obj


def track_from_json(obj: dict) -> Track:
    label = obj.get("label")
    if label is not None and not isinstance(label, str):
        raise ValueError("label must be a string or null")
    ids = obj.get("tracklet_ids", [])
    if not isinstance(ids, list):
        raise ValueError("tracklet_ids must be a list")
    lambdas = obj.get("junction_lambdas", [])
    if not isinstance(lambdas, list) or not all(_is_number(v) for v in lambdas):
        raise ValueError("junction_lambdas must be a list of numbers")
    extra = {k: v for k, v in obj.items() if k not in _TRACK_KEYS}
    return Track(
        id=_id(obj["id"]),
        tracklet_ids=tuple(_id(v, "tracklet id") for v in ids),
        observations=_observations_from_json(obj.get("observations", [])),
        label=label,
        junction_lambdas=tuple(lambdas),
        extra=extra,
    )


def timeline_from_json(obj: dict) -> tuple:
    sel = obj["selected"]
    if not isinstance(sel, list):
        raise ValueError("selected must be a list")
    return _int(obj["frame"], "frame"), tuple(_id(v, "tracklet id") for v in sel)


def write_jsonl(path, items: Iterable, encode: Callable[[object], dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(_dumps(encode(item)))
            fh.write("\n")


def write_tracks(path, tracks: Iterable[Track]) -> None:
    write_jsonl(path, tracks, track_to_json)


def read_tracks(path, strict: bool = True, errors: Optional[list] = None) -> list[Track]:
    tracks = list(iter_jsonl(path, track_from_json, strict, errors))
    _check_unique([t.id for t in tracks], "track id", path)
    return tracks


def write_tracklets(path, tracklets: Iterable[Tracklet]) -> None:
    write_jsonl(path, tracklets, tracklet_to_json)


def read_tracklets(path, strict: bool = True, errors: Optional[list] = None) -> list[Tracklet]:
    tracklets = list(iter_jsonl(path, tracklet_from_json, strict, errors))
    _check_unique([t.id for t in tracklets], "tracklet id", path)
    return tracklets


def write_timeline(path, timeline: SelectionTimeline) -> None:
    items = [{"frame": f, "selected": list(ids)} for f, ids in timeline.frames.items()]
    write_jsonl(path, items, lambda x: x)


def read_timeline(path, strict: bool = True, errors: Optional[list] = None) -> SelectionTimeline:
    frames: dict = {}
    for frame, ids in iter_jsonl(path, timeline_from_json, strict, errors):
        if frame in frames:
            err = DataError(f"frame {frame} listed twice", path)
            if strict:
                raise err
            if errors is not None:
                errors.append(err)
            continue
        frames[frame] = ids
    return SelectionTimeline(frames)


def _check_unique(ids: Sequence, what: str, path) -> None:
    seen = set()
    for v in ids:
        if v in seen:
            raise DataError(f"duplicate {what} {v!r}", path)
        seen.add(v)


# ---------------------------------------------------------------- embeddings

def write_embeddings(path, emb: EmbeddingMatrix) -> None:
    for rid in emb.row_ids:
        if not rid or "\n" in rid:
            raise ValueError(f"row id {rid!r} must be non-empty and free of newlines")
    rows, dims = emb.data.shape
    with open(path, "wb") as fh:
        fh.write(_EMB_HEADER.pack(EMB_MAGIC, rows, dims))
        fh.write(np.ascontiguousarray(emb.data, dtype="<f4").tobytes())
        fh.write("\n".join(emb.row_ids).encode("utf-8"))


def read_embeddings(path) -> EmbeddingMatrix:
    blob = Path(path).read_bytes()
    if len(blob) < _EMB_HEADER.size:
        raise DataError(f"file too short for header ({len(blob)} bytes)", path, offset=0)
    magic, rows, dims = _EMB_HEADER.unpack_from(blob)
    if magic != EMB_MAGIC:
        raise DataError(f"bad magic {magic!r}", path, offset=0)
    body = rows * dims * 4
    end = _EMB_HEADER.size + body
    if len(blob) < end:
        raise DataError(f"header announces {rows}x{dims} floats but data ends early", path, offset=len(blob))
    data = np.frombuffer(blob, dtype="<f4", count=rows * dims, offset=_EMB_HEADER.size)
    data = data.reshape(rows, dims).astype(np.float32)
    bad = np.flatnonzero(~np.isfinite(data).all(axis=1))
    if bad.size:
        row = int(bad[0])
        raise DataError(f"non-finite value in row {row}", path, offset=_EMB_HEADER.size + row * dims * 4)
    try:
        tail = blob[end:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError("row ids are not valid UTF-8", path, offset=end + exc.start) from exc
    ids = tail.split("\n") if tail else []
    if len(ids) != rows:
        raise DataError(f"{len(ids)} row ids for {rows} rows", path, offset=end)
    return EmbeddingMatrix(data, tuple(ids))


# ---------------------------------------------------------------- CSV files

def write_annotations(path, pairs: Iterable[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["track_id", "annotation"])
        for tid, ann in pairs:
            w.writerow([tid, str(ann)])


def read_annotations(path, strict: bool = True, errors: Optional[list] = None) -> dict[str, Annotation]:
    """``track_id -> Annotation``, in file order. Track ids are read as strings."""
    out: dict[str, Annotation] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    offsets = _line_offsets(text)
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None:
        return out
    if [h.strip() for h in header] != ["track_id", "annotation"]:
        raise DataError("header must be 'track_id,annotation'", path, 1, 0)
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) != 2:
                raise ValueError(f"expected 2 columns, got {len(row)}")
            tid = row[0].strip()
            if not tid:
                raise ValueError("empty track id")
            if tid in out:
                raise ValueError(f"duplicate track id {tid!r}")
            out[tid] = Annotation.parse(row[1])
        except ValueError as exc:
            err = DataError(str(exc), path, lineno, offsets[min(lineno - 1, len(offsets) - 1)])
            if strict:
                raise err from exc
            if errors is not None:
                errors.append(err)
    return out


def _line_offsets(text: str) -> list[int]:
    offsets, pos = [0], 0
    for line in text.splitlines(keepends=True):
        pos += len(line.encode("utf-8"))
        offsets.append(pos)
    return offsets


def write_result(path, result: ClusteringResult, row_ids: Sequence[str]) -> None:
    """One ``row_id,label,outlier_score`` line per row plus a JSON sidecar for metadata."""
    if len(row_ids) != result.assignments.size:
        raise ValueError("row ids must align with the result")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "label", "outlier_score"])
        for rid, lab, score in zip(row_ids, result.assignments, result.outlier_score):
            w.writerow([rid, int(lab), repr(float(score))])
    meta = dict(result.algorithm_meta, n_clusters=result.n_clusters)
    Path(str(path) + ".meta.json").write_text(_json_text(meta), encoding="utf-8")


def read_result(path) -> tuple[ClusteringResult, tuple[str, ...]]:
    ids, labels, scores = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    offsets = _line_offsets(text)
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header != ["row_id", "label", "outlier_score"]:
        raise DataError("header must be 'row_id,label,outlier_score'", path, 1, 0)
    for row in reader:
        if not row:
            continue
        try:
            if len(row) != 3:
                raise ValueError(f"expected 3 columns, got {len(row)}")
            score = float(row[2])
            if math.isnan(score):
                raise ValueError("outlier score is NaN")
            ids.append(row[0])
            labels.append(int(row[1]))
            scores.append(score)
        except ValueError as exc:
            line = reader.line_num
            raise DataError(str(exc), path, line, offsets[min(line - 1, len(offsets) - 1)]) from exc
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    n_clusters = len({lab for lab in labels if lab >= 0})
    meta.pop("n_clusters", None)
    try:
        result = ClusteringResult(np.array(labels, dtype=np.int64), np.array(scores), n_clusters, meta)
    except ValueError as exc:
        raise DataError(str(exc), path) from exc
    return result, tuple(ids)


def write_curve(path, curve) -> None:
    Path(path).write_text(curve.to_csv(), encoding="utf-8")


# ---------------------------------------------------------------- JSON blobs

def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(_json_text(obj), encoding="utf-8")


def write_pca(path, model: PcaModel) -> None:
    write_json(path, {
        "mean": model.mean.tolist(),
        "components": model.components.tolist(),
        "explained_variance": model.explained_variance.tolist(),
    })


def read_pca(path) -> PcaModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        model = PcaModel(
            np.asarray(obj["mean"], dtype=np.float64),
            np.asarray(obj["components"], dtype=np.float64),
            np.asarray(obj["explained_variance"], dtype=np.float64),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"bad PCA model: {exc}", path) from exc
    if model.components.ndim != 2 or model.components.shape[1] != model.mean.size:
        raise DataError("PCA components do not match the mean vector", path)
    return model


# ---------------------------------------------------------------- ingestion

@dataclass
class IngestReport:
    """Corpus statistics plus any cross-file problems found."""

    n_frames: Optional[int] = None
    n_tracks: int = 0
    n_annotated: int = 0
    n_category: int = 0
    n_unknown: int = 0
    n_tracking_errors: int = 0
    n_known_label: int = 0
    n_unknown_label: int = 0
    n_tracklets: Optional[int] = None
    n_embedding_rows: Optional[int] = None
    dangling: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def error_rate(self) -> float:
        return self.n_tracking_errors / self.n_annotated if self.n_annotated else 0.0

    def as_dict(self) -> dict:
        return {
            "frames": self.n_frames,
            "tracks_total": self.n_tracks,
            "tracks_labeled": self.n_annotated,
            "tracks_category": self.n_category,
            "tracks_unknown": self.n_unknown,
            "tracks_tracking_error": self.n_tracking_errors,
            "tracking_error_rate": self.error_rate,
            "tracker_known": self.n_known_label,
            "tracker_unknown": self.n_unknown_label,
            "tracklets": self.n_tracklets,
            "embedding_rows": self.n_embedding_rows,
            "dangling": list(self.dangling),
            "errors": [str(e) for e in self.errors],
        }

    def to_text(self) -> str:
        rows = [
            ("Frames", "-" if self.n_frames is None else self.n_frames),
            ("Tracks (total)", self.n_tracks),
            ("Tracks (labeled)", self.n_annotated),
            ("  category", self.n_category),
            ("  unknown", self.n_unknown),
            ("  tracking error", f"{self.n_tracking_errors} ({100 * self.error_rate:.1f}%)"),
            ("Tracker known / unknown", f"{self.n_known_label} / {self.n_unknown_label}"),
        ]
        if self.n_tracklets is not None:
            rows.append(("Tracklets", self.n_tracklets))
        if self.n_embedding_rows is not None:
            rows.append(("Embedding rows", self.n_embedding_rows))
        lines = [f"{k:<26}{v}" for k, v in rows]
        if self.dangling:
            lines.append(f"dangling references: {len(self.dangling)}")
            lines.extend(f"  {d}" for d in self.dangling[:20])
        if self.errors:
            lines.append(f"malformed records: {len(self.errors)}")
            lines.extend(f"  {e}" for e in self.errors[:20])
        return "\n".join(lines) + "\n"


def embedding_track_id(row_id: str) -> str:
    """Crop rows are named ``<track_id>/<crop>``; track rows are the id itself."""
    return row_id.rsplit("/", 1)[0] if "/" in row_id else row_id


def ingest_validate(directory) -> IngestReport:
    """Read whatever standard files exist in ``directory`` and cross-check them.

    Malformed lines and dangling references are recorded, never fatal.
    """
    d = Path(directory)
    report = IngestReport()
    errors: list = []
    tracks: list[Track] = []
    if (d / TRACKS_FILE).exists():
        tracks = list(iter_jsonl(d / TRACKS_FILE, track_from_json, strict=False, errors=errors))
    track_ids = {str(t.id) for t in tracks}
    report.n_tracks = len(tracks)
    report.n_known_label = sum(t.label is not None for t in tracks)
    report.n_unknown_label = report.n_tracks - report.n_known_label

    meta = {}
    if (d / META_FILE).exists():
        try:
            meta = json.loads((d / META_FILE).read_text(encoding="utf-8"))
        except ValueError as exc:
            errors.append(DataError(f"bad metadata: {exc}", d / META_FILE))
    if isinstance(meta.get("frames"), int):
        report.n_frames = meta["frames"]
    elif tracks:
        report.n_frames = len({o.frame_index for t in tracks for o in t.observations})

    if (d / ANNOTATIONS_FILE).exists():
        try:
            annotations = read_annotations(d / ANNOTATIONS_FILE, strict=False, errors=errors)
        except DataError as exc:
            errors.append(exc)
            annotations = {}
        report.n_annotated = len(annotations)
        for tid, ann in annotations.items():
            if ann.kind == "category":
                report.n_category += 1
            elif ann.kind == "unknown":
                report.n_unknown += 1
            else:
                report.n_tracking_errors += 1
            if tid not in track_ids and tracks:
                report.dangling.append(f"annotation for missing track {tid}")

    if (d / TRACKLETS_FILE).exists():
        tracklets = list(iter_jsonl(d / TRACKLETS_FILE, tracklet_from_json, strict=False, errors=errors))
        report.n_tracklets = len(tracklets)
        known = {t.id for t in tracklets}
        for t in tracks:
            for tid in t.tracklet_ids:
                if tid not in known:
                    report.dangling.append(f"track {t.id} references missing tracklet {tid}")
        if (d / TIMELINE_FILE).exists():
            timeline = read_timeline(d / TIMELINE_FILE, strict=False, errors=errors)
            for tid in sorted(timeline.referenced_ids() - known, key=str):
                report.dangling.append(f"timeline references missing tracklet {tid}")

    rows = 0
    for name in (CROPS_FILE, EMBEDDINGS_FILE):
        if not (d / name).exists():
            continue
        try:
            emb = read_embeddings(d / name)
        except DataError as exc:
            errors.append(exc)
            continue
        rows += emb.rows
        if tracks:
            missing = sorted({embedding_track_id(r) for r in emb.row_ids} - track_ids)
            report.dangling.extend(f"{name} row for missing track {m}" for m in missing)
        report.n_embedding_rows = rows
    report.errors = errors
    return report


def annotated_tracks(tracks: Sequence[Track], annotations: dict) -> list[AnnotatedTrack]:
    """Pair tracks with their annotation; unannotated tracks are skipped."""
    return [AnnotatedTrack(t, annotations[str(t.id)]) for t in tracks if str(t.id) in annotations]
