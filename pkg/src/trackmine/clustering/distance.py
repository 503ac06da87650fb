"""Exact Euclidean distance kernels shared by both clusterers.

The canonical distance between rows ``a`` and ``b`` is
``sqrt(sum_k (float64(a[k]) - float64(b[k])) ** 2)`` with the sum taken
strictly in dimension order. Every routine here (pairwise blocks, k-NN,
the Prim sweep in :mod:`.mst`) reproduces that value bit for bit, which is
what lets the MST and k-NN oracles compare with ``==``.

Vectorisation runs across points rather than across dimensions: the data
is kept dims-major (``xt[k, j]``) so that one dimension is swept over a tile
of points at a time without reassociating any sum.
"""
from __future__ import annotations

import numba
import numpy as np

from .._validation import as_float_matrix

ENGINES = ("numba", "numpy")
TILE = 2048
CROSS_TILE = 256


@numba.njit(cache=True, boundscheck=False)
def sweep_tile(xt, q, lo, hi, acc):
    """acc[j - lo] = squared canonical distance from ``q`` to column j."""
    q0 = q[0]
    for j in range(lo, hi):
        t = np.float64(xt[0, j]) - q0
        acc[j - lo] = t * t
    for k in range(1, xt.shape[0]):
        qk = q[k]
        for j in range(lo, hi):
            t = np.float64(xt[k, j]) - qk
            acc[j - lo] += t * t


@numba.njit(cache=True, boundscheck=False)
def sqdist_rows(x, i, y, j):
    s = 0.0
    for k in range(x.shape[1]):
        t = np.float64(x[i, k]) - np.float64(y[j, k])
        s += t * t
    return s


@numba.njit(cache=True, parallel=True, boundscheck=False)
def _cross_numba(x, yt, out):
    n = yt.shape[1]
    d = yt.shape[0]
    m = x.shape[0]
    q = np.empty((m, d))
    for i in range(m):
        for k in range(d):
            q[i, k] = np.float64(x[i, k])
    # tiles of points outermost so every query reuses a tile while it is cached
    step = CROSS_TILE
    for t in numba.prange((n + step - 1) // step):
        lo = t * step
        hi = min(lo + step, n)
        for i in range(m):
            row = out[i, lo:hi]
            sweep_tile(yt, q[i], lo, hi, row)
            for j in range(hi - lo):
                row[j] = np.sqrt(row[j])


def _cross_numpy(x, y, block=512):
    out = np.empty((x.shape[0], y.shape[0]))
    xf = x.astype(np.float64)
    yf = y.astype(np.float64)
    for start in range(0, x.shape[0], block):
        xb = xf[start:start + block]
        acc = np.zeros((xb.shape[0], yf.shape[0]))
        for k in range(xf.shape[1]):
            t = xb[:, k, None] - yf[None, :, k]
            acc += t * t
        out[start:start + block] = np.sqrt(acc)
    return out


def cross_distances(a, b, engine: str = "numba") -> np.ndarray:
    """Distances between every row of ``a`` and every row of ``b``."""
    x = as_float_matrix(a)
    y = as_float_matrix(b)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if engine == "numba":
        if x.dtype != y.dtype:
            x, y = x.astype(np.float64), y.astype(np.float64)
        out = np.empty((x.shape[0], y.shape[0]))
        _cross_numba(x, np.ascontiguousarray(y.T), out)
        return out
    if engine == "numpy":
        return _cross_numpy(x, y)
    raise ValueError(f"unknown distance engine {engine!r}")


def pairwise_distances(data, queries=None, engine: str = "numba") -> np.ndarray:
    """Distance rows from the ``queries`` rows (indices, default all) to every row."""
    x = as_float_matrix(data)
    idx = np.arange(x.shape[0]) if queries is None else np.asarray(queries, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError("query index out of range")
    return cross_distances(x[idx], x, engine=engine)


@numba.njit(cache=True, parallel=True, boundscheck=False)
def _kth_from_block(x, start, gram, norms, slack, k, out):
    # |norms[i] + norms[j] - 2 gram[r, j] - true squared distance| <= slack[i] + slack[j]
    m, n = gram.shape
    for r in numba.prange(m):
        i = start + r
        ni = norms[i]
        top = np.full(k, np.inf)
        for j in range(n):
            v = ni + norms[j] - 2.0 * np.float64(gram[r, j]) + slack[j]
            if v < top[k - 1]:
                pos = k - 1
                while pos > 0 and top[pos - 1] > v:
                    top[pos] = top[pos - 1]
                    pos -= 1
                top[pos] = v
        thr = top[k - 1] + 2.0 * slack[i]
        exact = np.full(k, np.inf)
        for j in range(n):
            if ni + norms[j] - 2.0 * np.float64(gram[r, j]) - slack[j] <= thr:
                v = sqdist_rows(x, i, x, j)
                if v < exact[k - 1]:
                    pos = k - 1
                    while pos > 0 and exact[pos - 1] > v:
                        exact[pos] = exact[pos - 1]
                        pos -= 1
                    exact[pos] = v
        out[r] = np.sqrt(exact[k - 1])


def _unit_scale(a):
    peak = float(np.max(np.abs(a), initial=0.0))
    if peak == 0.0:
        return a
    return np.ldexp(a, -np.frexp(peak)[1])


def core_distances(data, min_samples: int, engine: str = "numba", block: int = 512) -> np.ndarray:
    """Distance from each row to its ``min_samples``-th nearest row, itself included.

    ``min_samples=1`` gives all zeros. The numba path screens candidates
    with a BLAS product and a rounding-error bound, then re-evaluates the
    survivors with the canonical kernel, so the result is exact.
    """
    x = as_float_matrix(data)
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    n, d = x.shape
    k = min(int(min_samples), n)
    out = np.empty(n)
    if engine == "numpy":
        for start in range(0, n, block):
            dist = _cross_numpy(x[start:start + block], x)
            out[start:start + block] = np.partition(dist, k - 1, axis=1)[:, k - 1]
        return out
    if engine != "numba":
        raise ValueError(f"unknown distance engine {engine!r}")
    # Centring leaves distances unchanged and keeps the screening bound tight.
    # The screen runs in float32: with u = 2**-24, rounding the inputs and a
    # length-d dot product in any order costs at most (d + 2) u |a| |b|, so
    # 4 (d + 4) u |a|^2 per point is a safe margin for each side. Power-of-two
    # rescaling keeps every entry below 1 so the cast cannot overflow; entries
    # that still land in the float32 subnormal range are off by at most 2**-150
    # each, which the absolute term absorbs.
    xf = _unit_scale(x.astype(np.float64))
    xf -= xf.mean(axis=0)
    xf = _unit_scale(xf)
    x32 = xf.astype(np.float32)
    norms = np.einsum("ij,ij->i", xf, xf)
    slack = 4.0 * (d + 4) * float(np.finfo(np.float32).eps) * norms + 4.0 * (d + 1) * 2.0**-149
    for start in range(0, n, block):
        stop = min(start + block, n)
        gram = x32[start:stop] @ x32.T
        _kth_from_block(x, start, gram, norms, slack, k, out[start:stop])
    return out
