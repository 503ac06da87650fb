"""Minimum spanning trees of the implicit mutual-reachability graph.

Edge weight between points a and b is ``max(core[a], core[b], d(a, b))``
with ``d`` the canonical distance of :mod:`.distance`. The graph is never
materialised.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .._validation import as_float_matrix
from .distance import TILE, sqdist_rows, sweep_tile

MST_ALGORITHMS = ("auto", "prim", "boruvka")


@numba.njit(cache=True, boundscheck=False)
def _heap_push(keys, idx, size, key, item):
    pos = size
    keys[pos] = key
    idx[pos] = item
    while pos > 0:
        parent = (pos - 1) >> 1
        if keys[parent] < keys[pos] or (keys[parent] == keys[pos] and idx[parent] < idx[pos]):
            break
        keys[parent], keys[pos] = keys[pos], keys[parent]
        idx[parent], idx[pos] = idx[pos], idx[parent]
        pos = parent
    return size + 1


@numba.njit(cache=True, boundscheck=False)
def _heap_pop(keys, idx, size):
    size -= 1
    keys[0] = keys[size]
    idx[0] = idx[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and (keys[right] < keys[left] or (keys[right] == keys[left] and idx[right] < idx[left])):
            child = right
        if keys[pos] < keys[child] or (keys[pos] == keys[child] and idx[pos] < idx[child]):
            break
        keys[pos], keys[child] = keys[child], keys[pos]
        idx[pos], idx[child] = idx[child], idx[pos]
        pos = child
    return size


@numba.njit(cache=True, boundscheck=False)
def _prim(x, core):
    n, d = x.shape
    src = np.empty(n - 1, dtype=np.int64)
    dst = np.empty(n - 1, dtype=np.int64)
    wgt = np.empty(n - 1)
    if n < 2:
        return src, dst, wgt

    # active points live compacted in columns [0, m) of xt
    xt = np.empty((d, n), dtype=x.dtype)
    for j in range(n):
        for k in range(d):
            xt[k, j] = x[j, k]
    ids = np.arange(n)
    best = np.full(n, np.inf)
    frm = np.full(n, -1)
    cores = core.copy()
    m = n

    # points whose best weight has reached their own core distance cannot improve
    hkeys = np.empty(n)
    hidx = np.empty(n, dtype=np.int64)
    hfrom = np.full(n, -1)
    hsize = 0

    q = np.empty(d)
    acc = np.empty(TILE)
    current = 0
    # remove vertex 0 from the active set
    for k in range(d):
        xt[k, 0] = xt[k, m - 1]
    ids[0] = ids[m - 1]
    cores[0] = cores[m - 1]
    m -= 1

    for step in range(n - 1):
        for k in range(d):
            q[k] = x[current, k]
        ccore = core[current]
        pos = 0
        while pos < m:
            hi = min(pos + TILE, m)
            sweep_tile(xt, q, pos, hi, acc)
            for j in range(pos, hi):
                w = np.sqrt(acc[j - pos])
                cj = cores[j]
                if cj > w:
                    w = cj
                if ccore > w:
                    w = ccore
                if w < best[j]:
                    best[j] = w
                    frm[j] = current
            pos = hi
        # retire settled points into the heap
        j = 0
        while j < m:
            if best[j] <= cores[j]:
                hsize = _heap_push(hkeys, hidx, hsize, best[j], ids[j])
                hfrom[ids[j]] = frm[j]
                m -= 1
                for k in range(d):
                    xt[k, j] = xt[k, m]
                ids[j] = ids[m]
                cores[j] = cores[m]
                best[j] = best[m]
                frm[j] = frm[m]
            else:
                j += 1
        # next vertex: cheapest of the active scan and the settled heap
        bj = -1
        bw = np.inf
        bid = n
        for j in range(m):
            if best[j] < bw or (best[j] == bw and ids[j] < bid):
                bw = best[j]
                bj = j
                bid = ids[j]
        if hsize > 0 and (hkeys[0] < bw or (hkeys[0] == bw and hidx[0] < bid)):
            nxt = hidx[0]
            src[step] = hfrom[nxt]
            wgt[step] = hkeys[0]
            hsize = _heap_pop(hkeys, hidx, hsize)
        else:
            nxt = bid
            src[step] = frm[bj]
            wgt[step] = bw
            m -= 1
            for k in range(d):
                xt[k, bj] = xt[k, m]
            ids[bj] = ids[m]
            cores[bj] = cores[m]
            best[bj] = best[m]
            frm[bj] = frm[m]
        dst[step] = nxt
        current = nxt
    return src, dst, wgt


@numba.njit(cache=True, boundscheck=False)
def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@numba.njit(cache=True, boundscheck=False)
def _boruvka(x, core):
    n, d = x.shape
    src = np.empty(max(n - 1, 0), dtype=np.int64)
    dst = np.empty(max(n - 1, 0), dtype=np.int64)
    wgt = np.empty(max(n - 1, 0))
    parent = np.arange(n)
    comp = np.arange(n)
    n_edges = 0
    xt = np.ascontiguousarray(x.T)
    q = np.empty(d)
    acc = np.empty(TILE)
    cand_w = np.empty(n)
    cand_a = np.empty(n, dtype=np.int64)
    cand_b = np.empty(n, dtype=np.int64)
    while n_edges < n - 1:
        for i in range(n):
            comp[i] = _find(parent, i)
        cand_w[:] = np.inf
        cand_a[:] = n
        cand_b[:] = n
        for i in range(n):
            ci = comp[i]
            for k in range(d):
                q[k] = x[i, k]
            for lo in range(0, n, TILE):
                hi = min(lo + TILE, n)
                sweep_tile(xt, q, lo, hi, acc)
                for j in range(lo, hi):
                    if comp[j] == ci:
                        continue
                    w = np.sqrt(acc[j - lo])
                    if core[i] > w:
                        w = core[i]
                    if core[j] > w:
                        w = core[j]
                    a = min(i, j)
                    b = max(i, j)
                    cw = cand_w[ci]
                    if w < cw or (w == cw and (a < cand_a[ci] or (a == cand_a[ci] and b < cand_b[ci]))):
                        cand_w[ci] = w
                        cand_a[ci] = a
                        cand_b[ci] = b
        for c in range(n):
            if comp[c] != c or cand_a[c] == n:
                continue
            ra = _find(parent, cand_a[c])
            rb = _find(parent, cand_b[c])
            if ra == rb:
                continue
            parent[max(ra, rb)] = min(ra, rb)
            src[n_edges] = cand_a[c]
            dst[n_edges] = cand_b[c]
            wgt[n_edges] = cand_w[c]
            n_edges += 1
    return src, dst, wgt


def mutual_reachability_mst(data, core: np.ndarray, algorithm: str = "auto"):
    """Return ``(src, dst, weight)`` arrays of the n-1 MST edges.

    ``prim`` sweeps the implicit complete graph in O(n^2 d) time and O(n d)
    memory. ``boruvka`` is a dense component-merging variant kept for
    cross-checking. With equal weights broken by index pair both produce
    the same tree weight.
    """
    x = as_float_matrix(data)
    core = np.ascontiguousarray(core, dtype=np.float64)
    if core.shape != (x.shape[0],):
        raise ValueError("one core distance per row required")
    if algorithm == "auto":
        algorithm = "prim"
    if algorithm == "prim":
        return _prim(x, core)
    if algorithm == "boruvka":
        return _boruvka(x, core)
    raise ValueError(f"unknown MST algorithm {algorithm!r}")


@numba.njit(cache=True)
def _single_linkage(src, dst, n):
    parent = np.arange(2 * n - 1)
    size = np.zeros(2 * n - 1, dtype=np.int64)
    size[:n] = 1
    out_a = np.empty(n - 1, dtype=np.int64)
    out_b = np.empty(n - 1, dtype=np.int64)
    out_s = np.empty(n - 1, dtype=np.int64)
    for e in range(n - 1):
        ra = _find(parent, src[e])
        rb = _find(parent, dst[e])
        node = n + e
        parent[ra] = node
        parent[rb] = node
        size[node] = size[ra] + size[rb]
        out_a[e] = min(ra, rb)
        out_b[e] = max(ra, rb)
        out_s[e] = size[node]
    return out_a, out_b, out_s


def single_linkage_tree(src, dst, weight, n: int) -> np.ndarray:
    """Dendrogram in scipy linkage layout: rows ``(left, right, height, size)``.

    Edges are applied in order of (weight, lower endpoint, higher endpoint).
    """
    if n < 2:
        return np.empty((0, 4))
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    order = np.lexsort((hi, lo, weight))
    a, b, s = _single_linkage(lo[order], hi[order], n)
    return np.column_stack([a, b, np.asarray(weight)[order], s]).astype(np.float64)



def mst_total_weight(weight) -> float:
    """Order-independent (correctly rounded) sum of edge weights."""
    return math.fsum(np.asarray(weight, dtype=np.float64).tolist())
