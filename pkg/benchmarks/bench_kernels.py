"""Benchmark the hot kernels: numba-compiled vs interpreted numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Runs each kernel through its compiled dispatcher and through the identical
undecorated function (``.py_func``), which is exactly what executes when
SOCIALAGENDA_DISABLE_NUMBA=1 is set. Sizes mirror the real workload: the
survey-scale split search, forest prediction, and per-meeting attribution.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from socialagenda import kernels
from socialagenda.shapley import group_info
from socialagenda.trees import HyperParams, fit_forest
from socialagenda.ingest import FeatureEncoder
from socialagenda import synth


def _time(fn, *args, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3, help="timing repetitions")
    args = parser.parse_args()

    if not kernels.NUMBA_ENABLED:
        raise SystemExit(
            "numba is disabled in this process; run without "
            "SOCIALAGENDA_DISABLE_NUMBA to compare both paths"
        )
    kernels.warmup()

    records = synth.generate(synth.SynthSpec(n_situations=2000, seed=1))
    enc = FeatureEncoder()
    X = enc.encode_matrix([r.features for r in records])
    y = np.array([r.priority.value for r in records])
    rows = np.arange(len(X), dtype=np.int64)
    feats = np.arange(X.shape[1], dtype=np.int64)

    print(f"{'kernel':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}")

    jit = _time(kernels.best_split, X, y, rows, feats, 2, repeat=args.repeat)
    py = _time(kernels.best_split.py_func, X, y, rows, feats, 2, repeat=args.repeat)
    print(f"{'best_split (2000x34)':<28}{jit:>11.4f}s{py:>11.4f}s{py / jit:>9.1f}x")

    model = fit_forest(X, y, HyperParams(n_trees=100, max_depth=10, seed=3),
                       schema=enc.schema, target="priority")
    cl, cr, ft, th, va, off = model._flat_arrays()
    probe = X[:1000]
    jit = _time(kernels.predict_forest, cl, cr, ft, th, va, off, probe, repeat=args.repeat)
    py = _time(kernels.predict_forest.py_func, cl, cr, ft, th, va, off, probe,
               repeat=args.repeat)
    print(f"{'predict (100 trees x 1000)':<28}{jit:>11.4f}s{py:>11.4f}s{py / jit:>9.1f}x")

    _, col_group = group_info(model.schema)
    n_groups = int(col_group.max()) + 1

    def run_shap(engine):
        for x in X[:50]:
            for tree in model.trees:
                node_group = np.where(tree.feature >= 0, col_group[tree.feature],
                                      -1).astype(np.int64)
                goes_left = np.zeros(tree.n_nodes, dtype=np.bool_)
                internal = tree.feature >= 0
                goes_left[internal] = x[tree.feature[internal]] <= tree.threshold[internal]
                engine(tree.children_left, tree.children_right, node_group,
                       tree.coverage, tree.value, goes_left, n_groups)

    jit = _time(run_shap, kernels.tree_shap, repeat=args.repeat)
    py = _time(run_shap, kernels.tree_shap.py_func, repeat=max(1, args.repeat // 3))
    print(f"{'tree_shap (100 trees x 50)':<28}{jit:>11.4f}s{py:>11.4f}s{py / jit:>9.1f}x")


if __name__ == "__main__":
    main()
