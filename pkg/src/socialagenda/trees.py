"""Regression trees, random forests and the predict-mean baseline.

Trees are CART-style: greedy binary splits minimizing the summed SSE of the
children, decision rule "go left iff x[feature] <= threshold", thresholds at
midpoints of consecutive distinct values, split-quality ties broken by
lowest feature index then lowest threshold. Every node keeps its training
coverage count; attribution depends on it.

Training is deterministic for a fixed seed: each tree derives its own RNG
from (seed, tree_index), so serial and parallel fits produce identical
models.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .domain import TARGET_RANGES
from .ingest import TooFewRecords

MODEL_FORMAT = "socialagenda/forest"
MODEL_VERSION = "1.0"

FEATURES_PER_SPLIT = ("all", "sqrt", "one_third")


class TreeLearningError(ValueError):
    pass


class EmptyTrainingSet(TreeLearningError):
    pass


class SchemaMismatch(TreeLearningError):
    pass


class GridEmpty(TreeLearningError):
    pass


class ModelFormatError(TreeLearningError):
    pass


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 300
    max_depth: Optional[int] = None  # None = unlimited
    min_samples_leaf: int = 1
    features_per_split: str = "all"
    bootstrap: bool = True
    seed: int = 2224

    def __post_init__(self):
        if self.n_trees < 1:
            raise TreeLearningError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 0:
            raise TreeLearningError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise TreeLearningError(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )
        if self.features_per_split not in FEATURES_PER_SPLIT:
            raise TreeLearningError(
                f"features_per_split must be one of {FEATURES_PER_SPLIT}"
            )

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }


# Nested node view, mostly for inspection and tests; flat arrays are the
# working representation.
@dataclass(frozen=True)
class Leaf:
    value: float
    coverage: int


@dataclass(frozen=True)
class Internal:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    coverage: int


TreeNode = Union[Internal, Leaf]


class Tree:
    """One fitted regression tree as flat preorder arrays."""

    __slots__ = ("children_left", "children_right", "feature", "threshold", "value", "coverage")

    def __init__(self, children_left, children_right, feature, threshold, value, coverage):
        self.children_left = np.asarray(children_left, dtype=np.int64)
        self.children_right = np.asarray(children_right, dtype=np.int64)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.value = np.asarray(value, dtype=np.float64)
        self.coverage = np.asarray(coverage, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def root(self) -> TreeNode:
        return self._node(0)

    def _node(self, i: int) -> TreeNode:
        if self.feature[i] < 0:
            return Leaf(value=float(self.value[i]), coverage=int(self.coverage[i]))
        return Internal(
            feature_index=int(self.feature[i]),
            threshold=float(self.threshold[i]),
            left=self._node(int(self.children_left[i])),
            right=self._node(int(self.children_right[i])),
            coverage=int(self.coverage[i]),
        )

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            node = (
                int(self.children_left[node])
                if x[self.feature[node]] <= self.threshold[node]
                else int(self.children_right[node])
            )
        if self.value.ndim == 2:
            return self.value[node]
        return float(self.value[node])

    def base_value(self) -> float:
        """Coverage-weighted mean leaf value: the tree's output when every
        split is averaged over (the attribution base)."""
        leaves = self.feature < 0
        return float(
            np.sum(self.value[leaves] * self.coverage[leaves]) / self.coverage[0]
        )

    def to_dict(self) -> dict:
        return {
            "children_left": self.children_left.tolist(),
            "children_right": self.children_right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "value": self.value.tolist(),
            "coverage": self.coverage.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            d["children_left"], d["children_right"], d["feature"],
            d["threshold"], d["value"], d["coverage"],
        )


def _seed_parts(seed) -> list[int]:
    parts = seed if isinstance(seed, (list, tuple)) else [seed]
    return [int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]


def _feature_count(mode: str, d: int) -> int:
    if mode == "sqrt":
        return max(1, int(np.sqrt(d)))
    if mode == "one_third":
        return max(1, d // 3)
    return d


def _grow(X: np.ndarray, y: np.ndarray, rows: np.ndarray, hp: HyperParams, rng) -> Tree:
    """Grow one tree over the given training rows (explicit stack, preorder)."""
    d = X.shape[1]
    k = _feature_count(hp.features_per_split, d)
    all_feats = np.arange(d, dtype=np.int64)
    min_leaf = hp.min_samples_leaf

    children_left: list[int] = []
    children_right: list[int] = []
    feature: list[int] = []
    threshold: list[float] = []
    value: list[float] = []
    coverage: list[float] = []

    def alloc() -> int:
        children_left.append(-1)
        children_right.append(-1)
        feature.append(-1)
        threshold.append(0.0)
        value.append(0.0)
        coverage.append(0.0)
        return len(feature) - 1

    # Stack entries: (node_index, rows, depth); parent links patched on pop.
    root = alloc()
    stack: list[tuple[int, np.ndarray, int]] = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        yr = y[node_rows]
        value[node] = float(np.mean(yr))
        coverage[node] = float(len(node_rows))
        stop = (
            (hp.max_depth is not None and depth >= hp.max_depth)
            or len(node_rows) < 2 * min_leaf
            or bool(np.all(yr == yr[0]))
        )
        if stop:
            continue
        if k >= d:
            feats = all_feats
        else:
            feats = np.sort(rng.choice(d, size=k, replace=False)).astype(np.int64)
        f, thr, _ = kernels.best_split(X, y, node_rows, feats, min_leaf)
        if f < 0 and k < d:
            rest = np.setdiff1d(all_feats, feats)
            if len(rest):
                f, thr, _ = kernels.best_split(X, y, node_rows, rest, min_leaf)
        if f < 0:
            continue
        mask = X[node_rows, f] <= thr
        feature[node] = int(f)
        threshold[node] = float(thr)
        left = alloc()
        right = alloc()
        children_left[node] = left
        children_right[node] = right
        # Push right first so the left subtree is grown (and draws RNG) first.
        stack.append((right, node_rows[~mask], depth + 1))
        stack.append((left, node_rows[mask], depth + 1))
    return Tree(children_left, children_right, feature, threshold, value, coverage)


def fit_tree(
    X: np.ndarray, y: np.ndarray, hp: HyperParams, rng: Optional[np.random.Generator] = None
) -> Tree:
    """Fit a single regression tree on all rows."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(X) == 0:
        raise EmptyTrainingSet("no training rows")
    if len(X) != len(y):
        raise SchemaMismatch(f"X has {len(X)} rows but y has {len(y)}")
    if rng is None:
        rng = np.random.default_rng(_seed_parts(hp.seed))
    return _grow(X, y, np.arange(len(X), dtype=np.int64), hp, rng)


@dataclass
class TreeEnsembleModel:
    """A fitted forest plus everything needed to reuse it: encoding schema,
    target (for output clamping), hyperparameters and training metadata."""

    trees: list[Tree]
    schema: tuple[tuple[str, str], ...]
    target: Optional[str]
    hyperparams: HyperParams
    metadata: dict = field(default_factory=dict)
    _flat: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.target is not None and self.target not in TARGET_RANGES:
            raise TreeLearningError(f"unknown target {self.target!r}")

    @property
    def n_features(self) -> int:
        return len(self.schema)

    def _flat_arrays(self):
        if self._flat is None:
            offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
            for i, t in enumerate(self.trees):
                offsets[i + 1] = offsets[i] + t.n_nodes
            cl = np.concatenate([t.children_left + off for t, off in zip(self.trees, offsets)])
            cr = np.concatenate([t.children_right + off for t, off in zip(self.trees, offsets)])
            # Leaf markers stay -1; child indices shift by the tree offset.
            for i, t in enumerate(self.trees):
                leaf = t.feature < 0
                cl[offsets[i]: offsets[i + 1]][leaf] = -1
                cr[offsets[i]: offsets[i + 1]][leaf] = -1
            ft = np.concatenate([t.feature for t in self.trees])
            th = np.concatenate([t.threshold for t in self.trees])
            va = np.concatenate([t.value for t in self.trees])
            object.__setattr__(self, "_flat", (cl, cr, ft, th, va, offsets))
        return self._flat

    def _check_width(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(
                f"input has {X.shape[1]} columns, schema expects {self.n_features}"
            )
        return np.ascontiguousarray(X)

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        """Unclamped ensemble mean (the attribution reference output)."""
        X = self._check_width(X)
        cl, cr, ft, th, va, off = self._flat_arrays()
        return kernels.predict_forest(cl, cr, ft, th, va, off, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        raw = self.predict_raw(X)
        if self.target is None:
            return raw
        lo, hi = TARGET_RANGES[self.target]
        return np.clip(raw, float(lo), float(hi))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "schema": [list(entry) for entry in self.schema],
            "target": self.target,
            "hyperparams": self.hyperparams.to_dict(),
            "metadata": self.metadata,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsembleModel":
        if d.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"not a {MODEL_FORMAT} file: {d.get('format')!r}")
        version = str(d.get("version", ""))
        if version.split(".", 1)[0] != MODEL_VERSION.split(".", 1)[0]:
            raise ModelFormatError(
                f"unsupported major version {version!r}; this build reads {MODEL_VERSION}"
            )
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            schema=tuple((name, kind) for name, kind in d["schema"]),
            target=d.get("target"),
            hyperparams=HyperParams(**d["hyperparams"]),
            metadata=d.get("metadata", {}),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TreeEnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    hp: HyperParams,
    schema: Optional[Sequence[tuple[str, str]]] = None,
    target: Optional[str] = None,
    seed=None,
    jobs: int = 1,
    metadata: Optional[dict] = None,
) -> TreeEnsembleModel:
    """Fit a random forest: each tree on its own bootstrap resample (when
    enabled) with per-split feature subsets, all randomness derived from
    (seed, tree_index)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(X) == 0:
        raise EmptyTrainingSet("no training rows")
    if len(X) != len(y):
        raise SchemaMismatch(f"X has {len(X)} rows but y has {len(y)}")
    if schema is None:
        schema = tuple((f"x{i}", "numeric") for i in range(X.shape[1]))
    schema = tuple((name, kind) for name, kind in schema)
    if len(schema) != X.shape[1]:
        raise SchemaMismatch(
            f"schema has {len(schema)} entries but X has {X.shape[1]} columns"
        )
    parts = _seed_parts(hp.seed if seed is None else seed)
    n = len(X)

    def build(t: int) -> Tree:
        rng = np.random.default_rng(parts + [t])
        rows = (
            rng.integers(0, n, size=n).astype(np.int64)
            if hp.bootstrap
            else np.arange(n, dtype=np.int64)
        )
        return _grow(X, y, rows, hp, rng)

    if jobs > 1 and hp.n_trees > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(build, range(hp.n_trees)))
    else:
        trees = [build(t) for t in range(hp.n_trees)]
    meta = {"seed": parts if len(parts) > 1 else parts[0], "n_rows": n}
    if metadata:
        meta.update(metadata)
    return TreeEnsembleModel(trees=trees, schema=schema, target=target,
                             hyperparams=hp, metadata=meta)


def fit_mean_baseline(
    y: np.ndarray,
    schema: Optional[Sequence[tuple[str, str]]] = None,
    target: Optional[str] = None,
) -> TreeEnsembleModel:
    """The paper-style floor: a constant predictor at the training mean,
    packaged as a single-leaf ensemble so the whole toolchain applies."""
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise EmptyTrainingSet("no training targets")
    if schema is None:
        schema = ()
    tree = Tree([-1], [-1], [-1], [0.0], [float(np.mean(y))], [float(len(y))])
    hp = HyperParams(n_trees=1, bootstrap=False, features_per_split="all")
    return TreeEnsembleModel(
        trees=[tree],
        schema=tuple(schema),
        target=target,
        hyperparams=hp,
        metadata={"model_kind": "predict_mean", "n_rows": int(len(y))},
    )


def fit_forest_multi(
    X: np.ndarray,
    Y: np.ndarray,
    hp: HyperParams,
    schema: Optional[Sequence[tuple[str, str]]] = None,
    targets: Optional[Sequence[str]] = None,
    seed=None,
) -> "MultiOutputForest":
    """Joint multi-target forest (split score summed over targets).

    Exploratory alternative to per-target models; not serialized to the
    versioned model format and not supported by the attribution engine.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.float64)
    if Y.shape[0] != X.shape[0]:
        raise SchemaMismatch(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if len(X) == 0:
        raise EmptyTrainingSet("no training rows")
    parts = _seed_parts(hp.seed if seed is None else seed)
    n, d = X.shape
    k = _feature_count(hp.features_per_split, d)
    all_feats = np.arange(d, dtype=np.int64)
    trees = []
    for t in range(hp.n_trees):
        rng = np.random.default_rng(parts + [t])
        rows = (
            rng.integers(0, n, size=n).astype(np.int64)
            if hp.bootstrap
            else np.arange(n, dtype=np.int64)
        )
        children_left: list[int] = []
        children_right: list[int] = []
        feature: list[int] = []
        threshold: list[float] = []
        value: list[list[float]] = []
        coverage: list[float] = []

        def alloc() -> int:
            children_left.append(-1)
            children_right.append(-1)
            feature.append(-1)
            threshold.append(0.0)
            value.append([0.0] * Y.shape[1])
            coverage.append(0.0)
            return len(feature) - 1

        stack = [(alloc(), rows, 0)]
        while stack:
            node, node_rows, depth = stack.pop()
            yr = Y[node_rows]
            value[node] = np.mean(yr, axis=0).tolist()
            coverage[node] = float(len(node_rows))
            if (
                (hp.max_depth is not None and depth >= hp.max_depth)
                or len(node_rows) < 2 * hp.min_samples_leaf
                or bool(np.all(yr == yr[0]))
            ):
                continue
            feats = (
                all_feats
                if k >= d
                else np.sort(rng.choice(d, size=k, replace=False)).astype(np.int64)
            )
            f, thr, _ = kernels.best_split_multi(X, Y, node_rows, feats, hp.min_samples_leaf)
            if f < 0 and k < d:
                rest = np.setdiff1d(all_feats, feats)
                if len(rest):
                    f, thr, _ = kernels.best_split_multi(X, Y, node_rows, rest, hp.min_samples_leaf)
            if f < 0:
                continue
            mask = X[node_rows, f] <= thr
            feature[node] = int(f)
            threshold[node] = float(thr)
            left, right = alloc(), alloc()
            children_left[node], children_right[node] = left, right
            stack.append((right, node_rows[~mask], depth + 1))
            stack.append((left, node_rows[mask], depth + 1))
        trees.append(Tree(children_left, children_right, feature, threshold, value, coverage))
    return MultiOutputForest(trees=trees, schema=tuple(schema or ()), targets=tuple(targets or ()), hyperparams=hp)


@dataclass
class MultiOutputForest:
    trees: list[Tree]
    schema: tuple[tuple[str, str], ...]
    targets: tuple[str, ...]
    hyperparams: HyperParams

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros((len(X), self.trees[0].value.shape[1]))
        for tree in self.trees:
            out += np.stack([tree.predict_one(x) for x in X])
        return out / len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        raw = self.predict_raw(X)
        for j, target in enumerate(self.targets):
            if target in TARGET_RANGES:
                lo, hi = TARGET_RANGES[target]
                raw[:, j] = np.clip(raw[:, j], float(lo), float(hi))
        return raw


def mean_absolute_error(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    return float(np.mean(np.abs(y_true - y_pred)))


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    grid: Sequence[HyperParams],
    k: int = 5,
    seed: int = 2224,
    schema: Optional[Sequence[tuple[str, str]]] = None,
    target: Optional[str] = None,
    jobs: int = 1,
) -> tuple[HyperParams, list[dict]]:
    """k-fold CV over a hyperparameter grid; returns the winning cell and the
    per-cell mean validation MAE table. Ties break toward fewer trees, then
    shallower depth (unlimited counts as deepest), then grid order."""
    if not grid:
        raise GridEmpty("hyperparameter grid is empty")
    if k < 2:
        raise TreeLearningError(f"k must be >= 2, got {k}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = len(X)
    if n < k:
        raise TooFewRecords(f"{n} records cannot fill {k} folds")
    perm = np.random.default_rng(_seed_parts(seed) + [0xCF]).permutation(n)
    folds = np.array_split(perm, k)
    results: list[dict] = []
    for ci, hp in enumerate(grid):
        fold_maes = []
        for fi, fold in enumerate(folds):
            val_idx = np.sort(fold)
            train_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != fi]))
            model = fit_forest(
                X[train_idx], y[train_idx], hp,
                schema=schema, target=target,
                seed=_seed_parts(seed) + [ci, fi], jobs=jobs,
            )
            fold_maes.append(mean_absolute_error(y[val_idx], model.predict(X[val_idx])))
        results.append({"hyperparams": hp, "fold_maes": fold_maes,
                        "mean_mae": float(np.mean(fold_maes))})

    def sort_key(entry):
        hp = entry["hyperparams"]
        depth = np.inf if hp.max_depth is None else hp.max_depth
        return (entry["mean_mae"], hp.n_trees, depth)

    best = min(enumerate(results), key=lambda pair: sort_key(pair[1]) + (pair[0],))
    return best[1]["hyperparams"], results


def default_grid(seed: int = 2224) -> list[HyperParams]:
    """The stock tuning grid; override via config for anything serious."""
    grid = []
    for n_trees in (100, 300, 500):
        for max_depth in (None, 8, 16):
            for min_leaf in (1, 5, 10):
                for mode in ("all", "sqrt", "one_third"):
                    grid.append(
                        HyperParams(
                            n_trees=n_trees, max_depth=max_depth,
                            min_samples_leaf=min_leaf, features_per_split=mode,
                            seed=seed,
                        )
                    )
    return grid
