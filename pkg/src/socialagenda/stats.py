"""Rank-sum significance testing for model error comparisons.

The statistic is the Mann-Whitney U of the first sample: the number of
(a, b) pairs with a > b, counting ties as half. Small pooled samples
(n_a + n_b <= 12) get an exact p by enumerating every assignment of the
pooled values to the two groups, which handles ties as a plain permutation
test; larger samples use the normal approximation with tie and continuity
corrections. U_a + U_b = n_a * n_b always holds.
"""

from __future__ import annotations

from itertools import combinations
from math import comb, erf, sqrt
from typing import Sequence

import numpy as np

EXACT_LIMIT = 12

ALTERNATIVES = ("two_sided", "less", "greater")


class EmptySample(ValueError):
    pass


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    # Pairwise counting; quadratic, but exact-path samples are tiny and the
    # approximation path sorts instead.
    gt = np.sum(a[:, None] > b[None, :])
    eq = np.sum(a[:, None] == b[None, :])
    return float(gt) + 0.5 * float(eq)


def _u_statistic_ranked(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled), dtype=np.float64)
    # Midranks for ties.
    sorted_vals = pooled[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    r_a = float(np.sum(ranks[: len(a)]))
    return r_a - len(a) * (len(a) + 1) / 2.0


def rank_sum_test(
    errors_a: Sequence[float], errors_b: Sequence[float], alternative: str = "two_sided"
) -> tuple[float, float]:
    """Mann-Whitney U test between two samples (typically per-example
    absolute errors of two models on a shared test set).

    Returns (U of the first sample, p-value). ``less`` tests whether the
    first sample tends to be smaller; swapping samples and flipping
    less/greater gives the same p.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise EmptySample("both samples must be nonempty")
    n_a, n_b = len(a), len(b)
    u_obs = _u_statistic(a, b) if n_a * n_b <= 4096 else _u_statistic_ranked(a, b)
    if n_a + n_b <= EXACT_LIMIT:
        p = _exact_p(a, b, u_obs, alternative)
    else:
        p = _normal_p(a, b, u_obs, alternative)
    return u_obs, p


def _exact_p(a: np.ndarray, b: np.ndarray, u_obs: float, alternative: str) -> float:
    pooled = np.concatenate([a, b])
    n = len(pooled)
    n_a = len(a)
    total = comb(n, n_a)
    le = 0
    ge = 0
    for members in combinations(range(n), n_a):
        sel = np.zeros(n, dtype=bool)
        sel[list(members)] = True
        u = _u_statistic(pooled[sel], pooled[~sel])
        if u <= u_obs:
            le += 1
        if u >= u_obs:
            ge += 1
    if alternative == "less":
        return le / total
    if alternative == "greater":
        return ge / total
    return min(1.0, 2.0 * min(le, ge) / total)


def _normal_p(a: np.ndarray, b: np.ndarray, u_obs: float, alternative: str) -> float:
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    pooled = np.sort(np.concatenate([a, b]))
    # Tie correction: sum of t^3 - t over tie groups.
    tie_term = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[j + 1] == pooled[i]:
            j += 1
        t = j - i + 1
        tie_term += t**3 - t
        i = j + 1
    mean = n_a * n_b / 2.0
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return 1.0
    sd = sqrt(var)

    def cdf(z: float) -> float:
        return 0.5 * (1.0 + erf(z / sqrt(2.0)))

    # Continuity correction of 0.5 toward the mean.
    p_less = cdf((u_obs - mean + 0.5) / sd)
    p_greater = 1.0 - cdf((u_obs - mean - 0.5) / sd)
    if alternative == "less":
        return min(1.0, p_less)
    if alternative == "greater":
        return min(1.0, p_greater)
    return min(1.0, 2.0 * min(p_less, p_greater))
