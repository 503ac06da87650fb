import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from fixtures import random_merge_instance
from trackmine.core import BoundingBox, FrameObservation, Tracklet
from trackmine.merge import (
    MergeConfig,
    SelectionTimeline,
    compression_report,
    merge_tracklets,
    overlap_ratio,
)
from trackmine.synthetic import SyntheticSpec, generate_tracklet_stream


def boxes(tid, frames, x=0.0, label=None):
    return Tracklet(tid, [FrameObservation(f, BoundingBox(x, 0.0, 10.0, 10.0)) for f in frames], label)


def test_overlap_identical_tracklets_is_one():
    a = boxes(1, range(5))
    assert overlap_ratio(a, a, 0.5) == 1.0


def test_overlap_disjoint_frames_is_zero():
    assert overlap_ratio(boxes(1, range(0, 5)), boxes(2, range(5, 9)), 0.5) == 0.0


def test_overlap_hand_counted_example():
    hi = boxes(1, range(1, 11))
    obs = [FrameObservation(f, BoundingBox(0.0 if f < 10 else 50.0, 0.0, 10.0, 10.0)) for f in range(6, 16)]
    hj = Tracklet(2, obs)
    assert overlap_ratio(hi, hj, 0.5) == pytest.approx(0.4, abs=0)
    assert oracles.overlap(hi, hj, 0.5) == 0.4


def test_single_tracklet_every_frame_gives_one_track():
    t = boxes("a", range(6))
    tracks = merge_tracklets([t], SelectionTimeline({f: ("a",) for f in range(6)}))
    assert len(tracks) == 1
    assert tracks[0].tracklet_ids == ("a",)
    assert tracks[0].observations == t.observations


def test_zero_overlap_in_disjoint_spans_gives_two_tracks():
    a, b = boxes(1, range(0, 5)), boxes(2, range(5, 10), x=100.0)
    tl = SelectionTimeline({f: (1,) if f < 5 else (2,) for f in range(10)})
    assert len(merge_tracklets([a, b], tl)) == 2


def test_chain_records_junction_lambda():
    a = boxes("A", range(1, 11))
    # B starts at frame 3, so 8 of A's 10 frames are shared and matching
    b = boxes("B", range(3, 21))
    lam = overlap_ratio(a, b, 0.5)
    assert lam == oracles.overlap(a, b, 0.5) == 0.8
    tl = SelectionTimeline({f: ("A",) if f <= 10 else ("B",) for f in range(1, 21)})
    tracks = merge_tracklets({"A": a, "B": b}, tl, MergeConfig(lambda_min=0.5))
    assert len(tracks) == 1
    assert tracks[0].tracklet_ids == ("A", "B")
    assert tracks[0].junction_lambdas == (0.8,)
    # A contributes the frames before the junction, B the rest
    assert [o.frame_index for o in tracks[0].observations] == list(range(1, 21))


def test_unknown_tracklet_id_raises():
    with pytest.raises(KeyError):
        merge_tracklets([boxes(1, [0])], SelectionTimeline({0: (1, 2)}))


@pytest.mark.parametrize("gamma,lam", [(0.0, 0.5), (0.5, 0.0), (1.5, 0.5), (0.5, -1.0)])
def test_config_bounds(gamma, lam):
    with pytest.raises(ValueError):
        MergeConfig(gamma=gamma, lambda_min=lam)


def test_track_label_is_length_weighted_majority():
    a = boxes(1, range(0, 3), label="car")
    b = Tracklet(2, [FrameObservation(f, BoundingBox(0.0, 0.0, 10.0, 10.0)) for f in range(1, 8)], "person")
    tl = SelectionTimeline({f: (1,) if f < 2 else (2,) for f in range(8)})
    (track,) = merge_tracklets([a, b], tl)
    assert track.label == "person"


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(60):
        tracklets, frames = random_merge_instance(rng)
        cfg = MergeConfig(gamma=float(rng.uniform(0.2, 0.9)), lambda_min=float(rng.uniform(0.1, 0.9)))
        got = merge_tracklets(tracklets, SelectionTimeline(frames), cfg)
        want = oracles.brute_merge(tracklets, frames, cfg.gamma, cfg.lambda_min)
        assert [t.tracklet_ids for t in got] == [w[0] for w in want]
        for t, w in zip(got, want):
            assert np.allclose(t.junction_lambdas, w[1], rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fragmented_stream_reassembles_true_tracks(seed):
    stream = generate_tracklet_stream(SyntheticSpec(n_tracks=60, seed=seed), 0.15)
    tracks = merge_tracklets(stream.tracklets, stream.timeline)
    assert len(tracks) == stream.n_true_tracks
    for t in tracks:
        assert len({stream.true_track[i] for i in t.tracklet_ids}) == 1
        assert min(t.junction_lambdas, default=1.0) >= 0.6


def test_no_fragmentation_is_identity():
    stream = generate_tracklet_stream(SyntheticSpec(n_tracks=40, seed=4), 0.0)
    tracks = merge_tracklets(stream.tracklets, stream.timeline)
    assert sorted(t.tracklet_ids for t in tracks) == sorted((t.id,) for t in stream.tracklets)


def test_low_overlap_junctions_never_merge():
    stream = generate_tracklet_stream(SyntheticSpec(n_tracks=40, seed=5), 0.2, overlap=0.1)
    assert stream.junction_lambdas
    cfg = MergeConfig(lambda_min=min(1.0, max(stream.junction_lambdas) + 1e-9))
    assert len(merge_tracklets(stream.tracklets, stream.timeline, cfg)) == len(stream.tracklets)


@given(st.data())
def test_overlap_ratio_symmetric_and_bounded(data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    tracklets, _ = random_merge_instance(np.random.default_rng(seed), max_tracklets=4, max_frames=15)
    a = tracklets[0]
    b = tracklets[-1]
    gamma = data.draw(st.floats(0.05, 0.95))
    lam = overlap_ratio(a, b, gamma)
    assert 0.0 <= lam <= 1.0
    assert lam == overlap_ratio(b, a, gamma)


@given(st.integers(0, 2**32 - 1))
def test_merge_partitions_selected_tracklets(seed):
    tracklets, frames = random_merge_instance(np.random.default_rng(seed))
    tracks = merge_tracklets(tracklets, SelectionTimeline(frames))
    used = [i for t in tracks for i in t.tracklet_ids]
    assert len(used) == len(set(used))
    assert set(used) == {i for ids in frames.values() for i in ids}
    for t in tracks:
        fr = [o.frame_index for o in t.observations]
        assert fr == sorted(fr) and len(fr) == len(set(fr))
        assert len(t.junction_lambdas) == len(t.tracklet_ids) - 1


def test_compression_per_image():
    stats = compression_report(tracklets_in=13, tracks_out=13, proposals_per_frame=100, frames=1)
    assert stats.per_frame_factor == pytest.approx(100 / 13)
    assert round(stats.per_frame_factor, 2) == 7.69


def test_compression_sequence_level():
    stats = compression_report(tracklets_in=20000, tracks_out=8005, proposals_per_frame=100, frames=42407)
    assert stats.sequence_factor == pytest.approx(4_240_700 / 8005)
    assert round(stats.sequence_factor, 1) == 529.8


def test_compression_zero_tracks_flags_undefined():
    stats = compression_report(10, 0, 100, 5)
    assert stats.undefined and math.isinf(stats.sequence_factor) and math.isinf(stats.tracklet_factor)
