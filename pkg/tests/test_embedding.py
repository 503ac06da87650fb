import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import pdist

from trackmine.core import EmbeddingMatrix
from trackmine.embedding import (
    PCA,
    pca_fit,
    pca_inverse_transform,
    pca_transform,
    representative_embedding,
    summarize_tracks,
)


def test_single_crop_is_its_own_representative():
    rep = representative_embedding(np.array([[1.5, -2.0]]))
    assert rep.source_crop_index == 0
    assert rep.vector.tolist() == [1.5, -2.0]


def test_mean_row_is_chosen():
    rep = representative_embedding(np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))
    assert rep.source_crop_index == 1


def test_representative_matches_exhaustive_scan():
    rng = np.random.default_rng(3)
    for _ in range(20):
        rows = rng.normal(size=(20, 8))
        mean = rows.mean(axis=0)
        best = min(range(20), key=lambda i: (sum((rows[i, k] - mean[k]) ** 2 for k in range(8)), i))
        assert representative_embedding(rows).source_crop_index == best


def test_zero_rows_rejected():
    with pytest.raises(ValueError):
        representative_embedding(np.empty((0, 3)))


def test_mean_mode():
    rep = representative_embedding(np.array([[0.0, 2.0], [2.0, 0.0]]), mode="mean")
    assert rep.vector.tolist() == [1.0, 1.0] and rep.source_crop_index == -1
    with pytest.raises(ValueError):
        representative_embedding(np.ones((1, 2)), mode="median")


@given(arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 6)),
              elements=st.floats(-100, 100, width=32)))
def test_representative_is_a_verbatim_row(rows):
    rep = representative_embedding(rows)
    assert np.array_equal(rep.vector, rows[rep.source_crop_index])
    assert rep.vector.dtype == rows.dtype


def test_summarize_groups_by_track_in_first_seen_order():
    crops = EmbeddingMatrix(np.array([[0, 0], [5, 5], [1, 1], [6, 6], [2, 2]], dtype=np.float32),
                            ("a/0", "b/0", "a/1", "b/1", "a/2"))
    out = summarize_tracks(crops, ["a", "b", "a", "b", "a"])
    assert out.row_ids == ("a", "b")
    assert out.data[0].tolist() == [1, 1]
    assert out.data[1].tolist() in ([5, 5], [6, 6])


def test_pca_affine_subspace():
    rng = np.random.default_rng(0)
    basis = np.linalg.qr(rng.normal(size=(10, 3)))[0].T
    x = rng.normal(size=(200, 3)) @ basis + rng.normal(size=10)
    model = pca_fit(x, 3)
    rec = pca_inverse_transform(model, pca_transform(model, x))
    assert np.max(np.linalg.norm(rec - x, axis=1)) < 1e-6
    full = pca_fit(x, 9)
    assert np.all(full.explained_variance[3:] < 1e-10)


def test_pca_square_case_is_isometry():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 7))
    z = pca_transform(pca_fit(x, 7), x)
    assert np.max(np.abs(pdist(z) - pdist(x))) < 1e-6


def test_pca_first_axis_matches_dense_eigensolver():
    rng = np.random.default_rng(2)
    x = rng.multivariate_normal([0, 0], [[3.0, 1.2], [1.2, 1.0]], size=500)
    comp = pca_fit(x, 1).components[0]
    w, v = np.linalg.eig(np.cov(x.T))
    top = v[:, np.argmax(w)]
    assert abs(comp @ top) > 0.999


def test_pca_transform_of_mean_is_zero():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(30, 5))
    model = pca_fit(x, 3)
    assert np.allclose(pca_transform(model, x.mean(axis=0, keepdims=True)), 0.0, atol=1e-12)


def test_pca_matches_svd_projection():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(80, 12)) * np.linspace(5, 0.5, 12)
    model = pca_fit(x, 5)
    centred = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    signs = np.sign(np.sum(vt[:5] * model.components, axis=1))
    oracle = centred @ (vt[:5] * signs[:, None]).T
    assert np.max(np.abs(pca_transform(model, x) - oracle)) < 1e-6
    assert np.allclose(model.explained_variance, s[:5] ** 2 / 79, rtol=1e-9)


def test_pca_sign_convention():
    rng = np.random.default_rng(6)
    comps = pca_fit(rng.normal(size=(40, 6)), 4).components
    idx = np.argmax(np.abs(comps), axis=1)
    assert np.all(comps[np.arange(4), idx] > 0)
    assert np.allclose(comps @ comps.T, np.eye(4), atol=1e-12)


@pytest.mark.parametrize("k", [0, 6, 100])
def test_pca_k_out_of_range(k):
    with pytest.raises(ValueError):
        pca_fit(np.random.default_rng(0).normal(size=(6, 5)), k)


def test_pca_rejects_bad_input():
    with pytest.raises(ValueError):
        pca_fit(np.array([[0.0, np.inf], [1.0, 2.0], [3.0, 1.0]]), 1)
    model = pca_fit(np.random.default_rng(0).normal(size=(10, 4)), 2)
    with pytest.raises(ValueError):
        pca_transform(model, np.zeros((2, 3)))


def test_pca_estimator_api():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(50, 6))
    est = PCA(n_components=3)
    assert est.get_params() == {"n_components": 3}
    z = est.fit_transform(x)
    assert z.shape == (50, 3)
    assert np.allclose(est.transform(x), z)
    assert est.inverse_transform(z).shape == (50, 6)


@given(st.integers(2, 30), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_pca_components_orthonormal(n, d, seed):
    x = np.random.default_rng(seed).normal(size=(n, d))
    k = min(n - 1, d)
    model = pca_fit(x, k)
    assert np.allclose(model.components @ model.components.T, np.eye(k), atol=1e-9)
    assert np.all(np.diff(model.explained_variance) <= 1e-12)
