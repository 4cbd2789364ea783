"""Hot numeric kernels: split search, forest prediction, fast attribution.

Each kernel is plain array code compiled with numba's @njit when available.
Set ``SOCIALAGENDA_DISABLE_NUMBA=1`` to force the pure-numpy interpreter
path (same functions, undecorated); ``benchmarks/bench_kernels.py`` compares
the two. Both paths execute identical arithmetic.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("SOCIALAGENDA_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

NUMBA_ENABLED = False
if not _DISABLE:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # numba missing: run the same code uncompiled
        NUMBA_ENABLED = False


def _jit(func):
    if NUMBA_ENABLED:
        return _njit(cache=True, nogil=True)(func)
    return func


@_jit
def best_split(X, y, rows, feats, min_leaf):
    """Exhaustive best split over the given rows and candidate features.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values. Score is the summed SSE of the two children (lower is better);
    ties keep the first candidate scanned, so passing ``feats`` in ascending
    order yields the lowest-feature-index, lowest-threshold winner.

    Returns (feature, threshold, child_sse); feature is -1 when no split
    satisfies ``min_leaf`` on both sides.
    """
    m = rows.shape[0]
    best_feat = np.int64(-1)
    best_thr = 0.0
    best_sse = np.inf
    yv = np.empty(m, dtype=np.float64)
    for i in range(m):
        yv[i] = y[rows[i]]
    for fi in range(feats.shape[0]):
        f = feats[fi]
        v = np.empty(m, dtype=np.float64)
        for i in range(m):
            v[i] = X[rows[i], f]
        order = np.argsort(v)
        sum_y = 0.0
        sum_y2 = 0.0
        for i in range(m):
            yi = yv[order[i]]
            sum_y += yi
            sum_y2 += yi * yi
        run_y = 0.0
        run_y2 = 0.0
        for j in range(m - 1):
            yj = yv[order[j]]
            run_y += yj
            run_y2 += yj * yj
            vj = v[order[j]]
            vn = v[order[j + 1]]
            if vn <= vj:
                continue
            nl = j + 1
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            ry = sum_y - run_y
            ry2 = sum_y2 - run_y2
            sse = (run_y2 - run_y * run_y / nl) + (ry2 - ry * ry / nr)
            if sse < best_sse:
                best_sse = sse
                best_feat = f
                best_thr = 0.5 * (vj + vn)
    return best_feat, best_thr, best_sse


@_jit
def best_split_multi(X, Y, rows, feats, min_leaf):
    """Best split for vector targets: score is SSE summed over target columns."""
    m = rows.shape[0]
    t = Y.shape[1]
    best_feat = np.int64(-1)
    best_thr = 0.0
    best_sse = np.inf
    yv = np.empty((m, t), dtype=np.float64)
    for i in range(m):
        for k in range(t):
            yv[i, k] = Y[rows[i], k]
    for fi in range(feats.shape[0]):
        f = feats[fi]
        v = np.empty(m, dtype=np.float64)
        for i in range(m):
            v[i] = X[rows[i], f]
        order = np.argsort(v)
        sum_y = np.zeros(t, dtype=np.float64)
        sum_y2 = np.zeros(t, dtype=np.float64)
        for i in range(m):
            for k in range(t):
                yi = yv[order[i], k]
                sum_y[k] += yi
                sum_y2[k] += yi * yi
        run_y = np.zeros(t, dtype=np.float64)
        run_y2 = np.zeros(t, dtype=np.float64)
        for j in range(m - 1):
            for k in range(t):
                yj = yv[order[j], k]
                run_y[k] += yj
                run_y2[k] += yj * yj
            vj = v[order[j]]
            vn = v[order[j + 1]]
            if vn <= vj:
                continue
            nl = j + 1
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sse = 0.0
            for k in range(t):
                ry = sum_y[k] - run_y[k]
                ry2 = sum_y2[k] - run_y2[k]
                sse += (run_y2[k] - run_y[k] * run_y[k] / nl) + (ry2 - ry * ry / nr)
            if sse < best_sse:
                best_sse = sse
                best_feat = f
                best_thr = 0.5 * (vj + vn)
    return best_feat, best_thr, best_sse


@_jit
def predict_forest(children_left, children_right, feature, threshold, value, tree_offsets, X):
    """Mean leaf value over all trees, per row. Trees are concatenated flat
    arrays; tree t occupies nodes tree_offsets[t]..tree_offsets[t+1]."""
    n = X.shape[0]
    n_trees = tree_offsets.shape[0] - 1
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            node = tree_offsets[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = children_left[node]
                else:
                    node = children_right[node]
            acc += value[node]
        out[i] = acc / n_trees
    return out


# ---------------------------------------------------------------------------
# Fast path-dependent Shapley attribution for one tree.
#
# The recursion keeps a path of unique players seen so far; each entry holds
# the player id (d), the fraction of background paths that flow through when
# the player is absent (z), whether the explained input follows the path when
# the player is present (o), and a permutation weight (w). Repeated splits on
# one player are folded into a single entry (unwind, then re-extend).


@_jit
def _ts_extend(d, z, o, w, ud, pz, po, pf):
    d[ud] = pf
    z[ud] = pz
    o[ud] = po
    w[ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        w[i + 1] += po * w[i] * (i + 1.0) / (ud + 1.0)
        w[i] = pz * w[i] * (ud - i) / (ud + 1.0)


@_jit
def _ts_unwind(d, z, o, w, ud, k):
    one = o[k]
    zero = z[k]
    n = w[ud]
    for j in range(ud - 1, -1, -1):
        if one != 0.0:
            t = w[j]
            w[j] = n * (ud + 1.0) / ((j + 1.0) * one)
            n = t - w[j] * zero * (ud - j) / (ud + 1.0)
        else:
            w[j] = w[j] * (ud + 1.0) / (zero * (ud - j))
    for j in range(k, ud):
        d[j] = d[j + 1]
        z[j] = z[j + 1]
        o[j] = o[j + 1]


@_jit
def _ts_unwound_sum(z, o, w, ud, k):
    one = o[k]
    zero = z[k]
    total = 0.0
    if one != 0.0:
        n = w[ud]
        for j in range(ud - 1, -1, -1):
            t = n / ((j + 1.0) * one)
            total += t
            n = w[j] - t * zero * (ud - j)
    else:
        for j in range(ud - 1, -1, -1):
            total += w[j] / (zero * (ud - j))
    return total * (ud + 1.0)


@_jit
def tree_shap(children_left, children_right, node_group, coverage, value, goes_left, n_groups):
    """Per-group Shapley values of one tree for the input encoded in
    ``goes_left`` (precomputed split outcomes for the explained x).

    Iterative DFS replacing the usual recursion: each tree level owns one
    row of the path buffers; a frame copies its parent's row, extends it,
    and either credits the leaf value or pushes its children. Deeper levels
    never touch shallower rows, so a pending sibling's view stays intact.
    """
    n_nodes = children_left.shape[0]
    phi = np.zeros(n_groups, dtype=np.float64)

    # Max path length = tree depth + 1 (plus the sentinel root entry).
    depth = np.zeros(n_nodes, dtype=np.int64)
    max_depth = 0
    for i in range(n_nodes):
        if depth[i] > max_depth:
            max_depth = depth[i]
        if children_left[i] >= 0:
            depth[children_left[i]] = depth[i] + 1
            depth[children_right[i]] = depth[i] + 1
    levels = max_depth + 2

    dbuf = np.empty((levels, levels), dtype=np.int64)
    zbuf = np.empty((levels, levels), dtype=np.float64)
    obuf = np.empty((levels, levels), dtype=np.float64)
    wbuf = np.empty((levels, levels), dtype=np.float64)

    # Frame stack: node, level, entries-on-parent-path, and the incoming
    # zero fraction / one fraction / player id.
    cap = levels + 2
    s_node = np.empty(cap, dtype=np.int64)
    s_level = np.empty(cap, dtype=np.int64)
    s_ud = np.empty(cap, dtype=np.int64)
    s_pzf = np.empty(cap, dtype=np.float64)
    s_pof = np.empty(cap, dtype=np.float64)
    s_pfi = np.empty(cap, dtype=np.int64)
    top = 0
    s_node[0] = 0
    s_level[0] = 0
    s_ud[0] = 0
    s_pzf[0] = 1.0
    s_pof[0] = 1.0
    s_pfi[0] = -1
    top = 1
    while top > 0:
        top -= 1
        node = s_node[top]
        level = s_level[top]
        ud = s_ud[top]
        pzf = s_pzf[top]
        pof = s_pof[top]
        pfi = s_pfi[top]
        d = dbuf[level]
        z = zbuf[level]
        o = obuf[level]
        w = wbuf[level]
        for i in range(ud):
            d[i] = dbuf[level - 1, i]
            z[i] = zbuf[level - 1, i]
            o[i] = obuf[level - 1, i]
            w[i] = wbuf[level - 1, i]
        _ts_extend(d, z, o, w, ud, pzf, pof, pfi)
        if children_left[node] < 0:
            for i in range(1, ud + 1):
                ws = _ts_unwound_sum(z, o, w, ud, i)
                phi[d[i]] += ws * (o[i] - z[i]) * value[node]
            continue
        if goes_left[node]:
            hot = children_left[node]
            cold = children_right[node]
        else:
            hot = children_right[node]
            cold = children_left[node]
        g = node_group[node]
        hot_frac = coverage[hot] / coverage[node]
        cold_frac = coverage[cold] / coverage[node]
        iz = 1.0
        io = 1.0
        found = -1
        for i in range(ud + 1):
            if d[i] == g:
                found = i
                break
        nud = ud + 1
        if found >= 0:
            iz = z[found]
            io = o[found]
            _ts_unwind(d, z, o, w, ud, found)
            nud = ud
        # Cold child below hot so the hot subtree completes first (order is
        # irrelevant to the result; additions commute per leaf).
        s_node[top] = cold
        s_level[top] = level + 1
        s_ud[top] = nud
        s_pzf[top] = iz * cold_frac
        s_pof[top] = 0.0
        s_pfi[top] = g
        top += 1
        s_node[top] = hot
        s_level[top] = level + 1
        s_ud[top] = nud
        s_pzf[top] = iz * hot_frac
        s_pof[top] = io
        s_pfi[top] = g
        top += 1
    return phi


def warmup() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 1.0]])
    y = np.array([1.0, 2.0, 3.0])
    rows = np.arange(3, dtype=np.int64)
    feats = np.arange(2, dtype=np.int64)
    best_split(X, y, rows, feats, 1)
    best_split_multi(X, y[:, None], rows, feats, 1)
    cl = np.array([1, -1, -1], dtype=np.int64)
    cr = np.array([2, -1, -1], dtype=np.int64)
    feat = np.array([0, -1, -1], dtype=np.int64)
    thr = np.array([0.5, 0.0, 0.0])
    val = np.array([0.0, 1.0, 2.0])
    off = np.array([0, 3], dtype=np.int64)
    predict_forest(cl, cr, feat, thr, val, off, X)
    cov = np.array([3.0, 2.0, 1.0])
    grp = np.array([0, -1, -1], dtype=np.int64)
    gl = np.array([True, False, False])
    tree_shap(cl, cr, grp, cov, val, gl, 1)
