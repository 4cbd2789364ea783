"""Independent reference implementations used only by tests.

These deliberately take different routes than the package:

- Shapley: coalition values from leaf path products (indicator edges for
  coalition members, coverage-fraction edges otherwise), combined with the
  factorial form of the Shapley sum. The package walks trees recursively
  (exact) or runs the path-permutation recursion (fast).
- Best split: exhaustive scan scoring candidates in exact rational
  arithmetic, immune to the float rounding of the production kernel.
- Rank-sum: exhaustive enumeration of group assignments with rank-based U.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import factorial

import numpy as np


def groups_of_schema(schema) -> tuple[list[str], np.ndarray]:
    groups: list[str] = []
    col_group = []
    for name, _kind in schema:
        base = name.split("=", 1)[0]
        if base.endswith("__present"):
            base = base[: -len("__present")]
        if not groups or groups[-1] != base:
            groups.append(base)
        col_group.append(len(groups) - 1)
    return groups, np.asarray(col_group, dtype=np.int64)


def brute_force_shap(model, x) -> tuple[np.ndarray, float, float]:
    """(grouped phi, base, full-coalition value) by explicit enumeration of
    every coalition of source features."""
    groups, col_group = groups_of_schema(model.schema)
    m = len(groups)
    n_masks = 1 << m
    # bit[g, mask] == 1 iff group g is in coalition `mask`
    bit = (np.arange(n_masks)[None, :] >> np.arange(max(m, 1))[:, None]) & 1
    v = np.zeros(n_masks, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    for tree in model.trees:
        stack = [(0, ())]
        while stack:
            node, edges = stack.pop()
            f = tree.feature[node]
            if f < 0:
                w = np.ones(n_masks, dtype=np.float64)
                per_group: dict[int, tuple[float, float]] = {}
                for g, passes, frac in edges:
                    a, b = per_group.get(g, (1.0, 1.0))
                    per_group[g] = (a * passes, b * frac)
                for g, (a, b) in per_group.items():
                    w *= np.where(bit[g] == 1, a, b)
                v += float(tree.value[node]) * w
                continue
            g = int(col_group[f])
            left = int(tree.children_left[node])
            right = int(tree.children_right[node])
            goes_left = 1.0 if x[f] <= tree.threshold[node] else 0.0
            cov = float(tree.coverage[node])
            stack.append((left, edges + ((g, goes_left, float(tree.coverage[left]) / cov),)))
            stack.append((right, edges + ((g, 1.0 - goes_left, float(tree.coverage[right]) / cov),)))
    v /= len(model.trees)
    phi = np.zeros(m, dtype=np.float64)
    if m:
        popcount = np.array([bin(mask).count("1") for mask in range(n_masks)])
        weights = np.array(
            [factorial(s) * factorial(m - s - 1) / factorial(m) for s in range(m)]
        )
        masks = np.arange(n_masks)
        for g in range(m):
            without = masks[(masks >> g) & 1 == 0]
            phi[g] = float(
                np.sum(weights[popcount[without]] * (v[without | (1 << g)] - v[without]))
            )
    return phi, float(v[0]), float(v[n_masks - 1])


def exhaustive_best_split(X, y, min_leaf: int = 1):
    """Best (feature, threshold) by exact rational scoring; None if no
    candidate satisfies min_leaf. Ties keep the lowest feature index, then
    the lowest threshold, mirroring the production contract."""
    n, d = X.shape
    best = None  # (sse: Fraction, feature, threshold_float)
    # Exact arithmetic assumes exactly-representable targets (integers or
    # dyadic rationals), which is what the tests feed in.
    yf = [Fraction(v) for v in y]
    for f in range(d):
        order = np.argsort(X[:, f], kind="mergesort")
        xs = X[order, f]
        ys = [yf[i] for i in order]
        for j in range(n - 1):
            if xs[j + 1] <= xs[j]:
                continue
            nl, nr = j + 1, n - j - 1
            if nl < min_leaf or nr < min_leaf:
                continue
            left, right = ys[: j + 1], ys[j + 1:]
            sse = _sse_frac(left) + _sse_frac(right)
            thr = 0.5 * (float(xs[j]) + float(xs[j + 1]))
            if best is None or sse < best[0]:
                best = (sse, f, thr)
    return None if best is None else (best[1], best[2])


def _sse_frac(values) -> Fraction:
    s = sum(values, Fraction(0))
    s2 = sum((v * v for v in values), Fraction(0))
    return s2 - s * s / len(values)


def exhaustive_rank_sum_p(a, b, alternative: str) -> float:
    """Permutation-test p by enumerating every way to assign the pooled
    values to the first group, with rank-based U."""
    pooled = list(a) + list(b)
    n, n_a = len(pooled), len(a)
    u_obs = _rank_u([pooled[i] for i in range(n_a)], [pooled[i] for i in range(n_a, n)])
    le = ge = total = 0
    for members in combinations(range(n), n_a):
        chosen = set(members)
        ua = _rank_u(
            [pooled[i] for i in members],
            [pooled[i] for i in range(n) if i not in chosen],
        )
        total += 1
        if ua <= u_obs:
            le += 1
        if ua >= u_obs:
            ge += 1
    if alternative == "less":
        return le / total
    if alternative == "greater":
        return ge / total
    return min(1.0, 2.0 * min(le, ge) / total)


def _rank_u(a, b) -> float:
    pooled = sorted(a + b)
    ranks = {}
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and pooled[j + 1] == pooled[i]:
            j += 1
        ranks[pooled[i]] = (i + j) / 2 + 1
        i = j + 1
    r_a = sum(ranks[v] for v in a)
    return r_a - len(a) * (len(a) + 1) / 2


def random_grouped_model(rng, n_groups=None, n_trees=None, max_depth=None,
                         n_rows=40, integer_targets=False):
    """A random forest over a schema with genuine one-hot groups, for
    attribution tests."""
    from socialagenda.trees import HyperParams, fit_forest

    n_groups = n_groups or int(rng.integers(2, 11))
    n_trees = n_trees or int(rng.integers(1, 51))
    max_depth = max_depth or int(rng.integers(1, 6))
    schema = []
    for g in range(n_groups):
        if rng.random() < 0.35:
            width = int(rng.integers(2, 5))
            schema.extend((f"g{g}=v{i}", "one_hot_component") for i in range(width))
        else:
            schema.append((f"g{g}", "ordinal"))
    d = len(schema)
    X = rng.normal(size=(n_rows, d))
    if integer_targets:
        y = rng.integers(0, 11, size=n_rows).astype(np.float64)
    else:
        y = rng.normal(size=n_rows)
    hp = HyperParams(
        n_trees=n_trees, max_depth=max_depth,
        min_samples_leaf=int(rng.integers(1, 4)),
        features_per_split=("all", "sqrt", "one_third")[int(rng.integers(3))],
        bootstrap=bool(rng.random() < 0.7),
        seed=int(rng.integers(0, 2**31)),
    )
    return fit_forest(X, y, hp, schema=schema), X
