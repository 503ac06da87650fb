import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import adjusted_mutual_info_score

import oracles
from trackmine.clustering import ClusteringResult
from trackmine.core import AnnotatedTrack, Annotation, Track
from trackmine.evaluation import (
    LabeledEvalSet,
    ami,
    cluster_report,
    distribution_report,
    eval_filter,
    expected_mutual_information,
    contingency_table,
    exclusion_order,
    outlier_curve,
    parse_fraction_range,
)
from trackmine.synthetic import zipf_allocation


def _labels(rng, n, k):
    return rng.integers(0, k, size=n).tolist()


def test_ami_matches_table_oracle():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n = int(rng.integers(2, 11))
        t, p = _labels(rng, n, 3), _labels(rng, n, 3)
        for avg in ("arithmetic", "max"):
            assert ami(t, p, avg) == pytest.approx(oracles.ami(t, p, avg), abs=1e-9)


def test_expected_mi_matches_permutation_average():
    rng = np.random.default_rng(1)
    for _ in range(15):
        n = int(rng.integers(2, 8))
        t, p = _labels(rng, n, 3), _labels(rng, n, 3)
        emi = expected_mutual_information(contingency_table(t, p))
        assert emi == pytest.approx(oracles.expected_mi_permutations(t, p), abs=1e-12)


def test_ami_matches_sklearn_on_large_inputs():
    rng = np.random.default_rng(2)
    for _ in range(10):
        n = int(rng.integers(50, 2000))
        t, p = _labels(rng, n, 12), _labels(rng, n, 7)
        for avg in ("arithmetic", "max"):
            assert ami(t, p, avg) == pytest.approx(
                adjusted_mutual_info_score(t, p, average_method=avg), abs=1e-9
            )


def test_ami_conventions():
    assert ami([0, 0, 1, 1], [5, 5, 3, 3]) == 1.0
    assert ami(["a", "b", "c"], [1, 1, 1]) == 0.0
    assert ami([1, 1, 1], [1, 2, 3]) == 0.0
    assert ami([7], [7]) == 1.0


def test_ami_input_errors():
    with pytest.raises(ValueError):
        ami([1, 2], [1])
    with pytest.raises(ValueError):
        ami([], [])
    with pytest.raises(ValueError):
        ami([1, 2], [1, 2], average_method="geometric")


@given(st.lists(st.integers(0, 3), min_size=2, max_size=30), st.integers(0, 2**32 - 1))
def test_ami_is_label_permutation_invariant(truth, seed):
    rng = np.random.default_rng(seed)
    pred = rng.integers(0, 3, size=len(truth))
    perm = rng.permutation(4)
    renamed = perm[np.asarray(truth)]
    assert ami(truth, pred) == pytest.approx(ami(renamed, pred), abs=1e-12)
    assert ami(truth, pred) == pytest.approx(ami(pred, truth), abs=1e-12)
    assert ami(truth, pred) <= 1.0 + 1e-12


def _evalset(truth, pred, scores, ids=None):
    ids = ids or [f"t{i:03d}" for i in range(len(truth))]
    return LabeledEvalSet(tuple(ids), tuple(truth), np.array(pred), np.array(scores, dtype=float))


def test_curve_at_zero_is_plain_ami():
    rng = np.random.default_rng(3)
    truth = [str(v) for v in rng.integers(0, 4, 60)]
    pred = rng.integers(0, 5, 60)
    ev = _evalset(truth, pred, rng.random(60))
    curve = outlier_curve(ev, [0.0, 0.5])
    assert curve.points[0].ami == ami(truth, pred)
    assert curve.points[0].n_evaluated == 60
    assert curve.points[1].n_evaluated == 30
    assert curve.distinguished_point is None


def test_curve_at_one_is_undefined():
    ev = _evalset(["a", "b"], [0, 1], [0.1, 0.2])
    point = outlier_curve(ev, [1.0]).points[0]
    assert point.n_evaluated == 0 and not point.defined and math.isnan(point.ami)


def test_curve_drops_noise_then_highest_scores():
    truth = ["a", "a", "b", "b", "a", "b"]
    pred = [0, 0, 1, 1, -1, 1]
    scores = [0.0, 0.9, 0.0, 0.1, 0.0, 0.8]
    ev = _evalset(truth, pred, scores)
    assert exclusion_order(ev).tolist() == [4, 1, 5, 3, 0, 2]
    curve = outlier_curve(ev, [0.0, 0.4])
    # the native noise fraction 1/6 joins the curve as the distinguished point
    fr = [p.fraction for p in curve.points]
    assert fr == [0.0, pytest.approx(1 / 6), 0.4]
    assert curve.points[curve.distinguished_point].distinguished
    assert curve.points[1].n_evaluated == 5
    assert curve.points[2].n_evaluated == 3
    # at f=0 the surviving noise point is its own singleton cluster
    assert curve.points[0].ami == ami(truth, [0, 0, 1, 1, 2, 1])


def test_curve_rejects_bad_fractions():
    ev = _evalset(["a"], [0], [0.0])
    with pytest.raises(ValueError):
        outlier_curve(ev, [0.2, 0.1])
    with pytest.raises(ValueError):
        outlier_curve(ev, [1.5])


def test_fraction_range():
    assert parse_fraction_range("0:0.5:0.05") == [round(0.05 * i, 12) for i in range(11)]
    assert parse_fraction_range("0.3") == [0.3]
    with pytest.raises(ValueError):
        parse_fraction_range("0:1")


def _track(i, annotation, label=None):
    return AnnotatedTrack(Track(f"t{i:05d}", (i,), (), label), annotation)


def test_eval_filter_boundary():
    tracks = [_track(i, Annotation("category", "big")) for i in range(30)]
    tracks += [_track(100 + i, Annotation("category", "small")) for i in range(29)]
    tracks += [_track(200, Annotation("unknown")), _track(201, Annotation("tracking_error"))]
    res = eval_filter(tracks, min_instances=30)
    assert len(res.retained) == 30
    assert res.excluded == {"unknown": 1, "tracking_error": 1, "rare_category": 29}
    assert res.n_excluded == 31
    assert eval_filter(tracks, min_instances=29).excluded["rare_category"] == 0


def test_distribution_report_counts():
    sizes = zipf_allocation(10_000, 30, 1.2)
    tracks, i = [], 0
    for c, size in enumerate(sizes):
        for _ in range(size):
            tracks.append(_track(i, Annotation("category", f"c{c:02d}"), "x" if i % 3 else None))
            i += 1
    tracks += [_track(i + j, Annotation("tracking_error")) for j in range(50)]
    rep = distribution_report(tracks, cutoff=30)
    assert [n for _, n in rep.counts] == sorted(sizes.tolist(), reverse=True)
    assert rep.n_tracks == 10_050 and rep.n_tracking_errors == 50
    assert len(rep.head) + len(rep.tail) == 30
    assert all(n >= 30 for _, n in rep.head)
    assert rep.as_dict()["tracking_error_rate"] == pytest.approx(50 / 10_050)
    assert "tracks total" in rep.to_text()


def test_distribution_report_empty():
    rep = distribution_report([])
    assert rep.counts == () and rep.error_rate == 0.0


def test_cluster_report_purity():
    result = ClusteringResult(np.array([0, 0, 0, 1, 1, -1]), np.zeros(6), 2)
    ids = ["a", "b", "c", "d", "e", "f"]
    ev = _evalset(["cat", "cat", "dog", "owl"], [0, 0, 0, 1], [0, 0, 0, 0], ids=["a", "b", "c", "d"])
    rep = cluster_report(result, ids, ev, min_cluster_display=1, known_categories=["cat", "dog"])
    first, second = rep.rows
    assert (first.size, first.n_annotated, first.dominant) == (3, 3, "cat")
    assert first.purity == pytest.approx(2 / 3)
    assert second.dominant == "owl" and second.novel and not first.novel
    assert cluster_report(result, ids, ev, min_cluster_display=3).rows == (first,)
