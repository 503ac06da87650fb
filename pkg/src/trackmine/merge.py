"""Progressive merging of per-frame selected tracklets into tracks.

The tracker picks a subset of tracklets in every frame. A track keeps its
current tracklet for as long as that tracklet is re-selected; when it is
dropped, the best-overlapping newly selected tracklet takes over, provided
their overlap ratio reaches ``lambda_min``. Otherwise the track ends.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .core import FrameObservation, Track, Tracklet, TrackletId, id_key, mask_iou


@dataclass(frozen=True)
class MergeConfig:
    gamma: float = 0.5
    lambda_min: float = 0.5

    def __post_init__(self):
        for name in ("gamma", "lambda_min"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")


@dataclass(frozen=True)
class SelectionTimeline:
    """Frame index -> ids of the tracklets selected in that frame.

    Only listed frames are swept; a frame with an empty selection must be
    present to end the tracks alive before it.
    """

    frames: Mapping[int, tuple[TrackletId, ...]] = field(default_factory=dict)

    def __post_init__(self):
        frozen = {int(f): tuple(ids) for f, ids in self.frames.items()}
        object.__setattr__(self, "frames", dict(sorted(frozen.items())))

    def referenced_ids(self) -> set:
        return {t for ids in self.frames.values() for t in ids}


def overlap_ratio(h_i: Tracklet, h_j: Tracklet, gamma: float) -> float:
    """Fraction of shared frames whose masks match (IoU > gamma), over the shorter length."""
    shorter = min(len(h_i), len(h_j))
    if shorter == 0:
        return 0.0
    masks_j = h_j.by_frame()
    matches = 0
    for obs in h_i.observations:
        other = masks_j.get(obs.frame_index)
        if other is not None and mask_iou(obs.geometry, other) > gamma:
            matches += 1
    return matches / shorter


def _track_label(tracklets: Sequence[Tracklet]) -> Optional[str]:
    votes = Counter()
    for t in tracklets:
        if t.classifier_label is not None:
            votes[t.classifier_label] += len(t)
    if not votes:
        return None
    best = max(votes.values())
    return min(name for name, n in votes.items() if n == best)


def _assemble(track_id, chain: list, junction_frames: list, lambdas: list) -> Track:
    observations: list[FrameObservation] = []
    for k, t in enumerate(chain):
        lo = junction_frames[k - 1] if k > 0 else -math.inf
        hi = junction_frames[k] if k < len(junction_frames) else math.inf
        observations.extend(o for o in t.observations if lo <= o.frame_index < hi)
    return Track(
        id=track_id,
        tracklet_ids=[t.id for t in chain],
        observations=observations,
        label=_track_label(chain),
        junction_lambdas=lambdas,
    )


class _OpenTrack:
    __slots__ = ("id", "chain", "junction_frames", "lambdas")

    def __init__(self, track_id, first: Tracklet):
        self.id = track_id
        self.chain = [first]
        self.junction_frames: list[int] = []
        self.lambdas: list[float] = []

    @property
    def current(self) -> Tracklet:
        return self.chain[-1]


def merge_tracklets(
    tracklets: Mapping[TrackletId, Tracklet] | Iterable[Tracklet],
    timeline: SelectionTimeline,
    cfg: MergeConfig = MergeConfig(),
) -> list[Track]:
    """Sweep the timeline once and chain tracklets into tracks.

    Dropped tracks are resolved in track-creation order; each picks the
    unclaimed new tracklet with the highest overlap ratio (lowest id on
    ties). Track ids are creation-order integers.
    """
    if not isinstance(tracklets, Mapping):
        tracklets = {t.id: t for t in tracklets}
    unknown = timeline.referenced_ids() - set(tracklets)
    if unknown:
        missing = sorted(unknown, key=id_key)
        raise KeyError(f"timeline references unknown tracklet ids: {missing[:10]}")

    active: list[_OpenTrack] = []
    finished: list[_OpenTrack] = []
    consumed: set = set()
    next_id = 0

    for frame, selected_ids in timeline.frames.items():
        selected = set(selected_ids)
        fresh = sorted((t for t in selected if t not in consumed), key=id_key)

        still_active = []
        dropped = []
        for track in active:
            (still_active if track.current.id in selected else dropped).append(track)

        for track in dropped:
            best_id, best_lam = None, -1.0
            for cand in fresh:
                if cand in consumed:
                    continue
                lam = overlap_ratio(track.current, tracklets[cand], cfg.gamma)
                if lam >= cfg.lambda_min and lam > best_lam:
                    best_id, best_lam = cand, lam
            if best_id is None:
                finished.append(track)
                continue
            consumed.add(best_id)
            track.chain.append(tracklets[best_id])
            track.junction_frames.append(frame)
            track.lambdas.append(best_lam)
            still_active.append(track)

        for cand in fresh:
            if cand in consumed:
                continue
            consumed.add(cand)
            still_active.append(_OpenTrack(next_id, tracklets[cand]))
            next_id += 1

        active = sorted(still_active, key=lambda t: t.id)

    finished.extend(active)
    finished.sort(key=lambda t: t.id)
    return [_assemble(t.id, t.chain, t.junction_frames, t.lambdas) for t in finished]


@dataclass(frozen=True)
class CompressionStats:
    proposals_per_frame: float
    tracks_per_frame: float
    per_frame_factor: float
    sequence_factor: float
    tracklet_factor: float
    undefined: bool


def compression_report(
    tracklets_in: int, tracks_out: int, proposals_per_frame: float, frames: int
) -> CompressionStats:
    """Proposal -> tracklet -> track reduction factors.

    ``tracks_out / frames`` is the per-frame track density; a zero
    denominator yields ``inf`` and sets ``undefined``.
    """
    for name, value in (("tracklets_in", tracklets_in), ("tracks_out", tracks_out),
                        ("proposals_per_frame", proposals_per_frame), ("frames", frames)):
        if value < 0:
            raise ValueError(f"{name} must be non-negative")

    def ratio(num, den):
        return num / den if den > 0 else math.inf

    total_proposals = proposals_per_frame * frames
    tracks_per_frame = ratio(tracks_out, frames) if frames else 0.0
    return CompressionStats(
        proposals_per_frame=float(proposals_per_frame),
        tracks_per_frame=tracks_per_frame,
        per_frame_factor=ratio(proposals_per_frame, tracks_per_frame),
        sequence_factor=ratio(total_proposals, tracks_out),
        tracklet_factor=ratio(tracklets_in, tracks_out),
        undefined=tracks_out == 0,
    )

