"""Exact Shapley attribution for tree ensembles.

Players are source features, not encoded columns: a one-hot group moves in
and out of coalitions as a unit. The value of a coalition S is the
path-dependent conditional expectation of the ensemble: walking each tree,
splits on features in S follow the explained input, all other splits
average both branches weighted by training coverage. No background dataset
is needed at explanation time; this matches the original tree-explainer
behavior and can differ from interventional variants.

Two interchangeable algorithms: ``shap_exact`` enumerates coalitions
(feasible up to 12 source features), ``shap_fast`` runs the polynomial
path-permutation recursion and agrees with it to floating-point accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from . import kernels
from .trees import SchemaMismatch, Tree, TreeEnsembleModel

LOCAL_ACCURACY_TOL = 1e-9
DIRECTION_TOL = 1e-6


class AttributionError(ValueError):
    pass


class TooManyFeatures(AttributionError):
    pass


class EmptyDataset(AttributionError):
    pass


class UnknownFeature(AttributionError):
    pass


def group_info(schema: Sequence[tuple[str, str]]) -> tuple[tuple[str, ...], np.ndarray]:
    """Source-feature groups of an encoding schema, in schema order.

    Column names of one-hot components are ``feature=value``; the extra
    ``__present`` column of an optional numeric belongs to its base feature.
    """
    groups: list[str] = []
    col_group = np.empty(len(schema), dtype=np.int64)
    for i, (name, kind) in enumerate(schema):
        base = name.split("=", 1)[0]
        if base.endswith("__present"):
            base = base[: -len("__present")]
        if not groups or groups[-1] != base:
            if base in groups:
                raise AttributionError(f"schema group {base!r} is not contiguous")
            groups.append(base)
        col_group[i] = len(groups) - 1
    return tuple(groups), col_group


@dataclass(frozen=True)
class Attribution:
    """Feature attributions for one prediction.

    base_value + sum(phi) equals the unclamped ensemble output. grouped_phi
    aligns with ``groups``; ``phi`` spreads each group's value onto its
    active member column so per-column and grouped views sum identically.
    """

    base_value: float
    phi: np.ndarray
    grouped_phi: np.ndarray
    groups: tuple[str, ...]
    prediction_raw: float

    def __post_init__(self):
        gap = abs(self.base_value + float(np.sum(self.grouped_phi)) - self.prediction_raw)
        if gap > 1e-6:
            raise AttributionError(f"local accuracy violated by {gap:.3e}")

    def grouped(self) -> dict[str, float]:
        return {g: float(v) for g, v in zip(self.groups, self.grouped_phi)}

    def top_feature(self) -> str:
        order = ranked_groups(self.groups, np.abs(self.grouped_phi))
        return order[0]


def ranked_groups(groups: Sequence[str], weight: np.ndarray) -> tuple[str, ...]:
    order = sorted(range(len(groups)), key=lambda g: (-weight[g], g))
    return tuple(groups[g] for g in order)


def _expand_phi(
    x: np.ndarray, schema: Sequence[tuple[str, str]], col_group: np.ndarray, phi_g: np.ndarray
) -> np.ndarray:
    """Assign each group's attribution to its active member column: the lit
    one-hot component, or the value column of an optional numeric."""
    phi = np.zeros(len(schema), dtype=np.float64)
    for g in range(len(phi_g)):
        cols = np.flatnonzero(col_group == g)
        if len(cols) == 1:
            phi[cols[0]] = phi_g[g]
            continue
        active = cols[0]
        for c in cols:
            if schema[c][1] == "one_hot_component" and x[c] == 1.0:
                active = c
                break
        phi[active] = phi_g[g]
    return phi


def _check_input(model: TreeEnsembleModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if len(x) != model.n_features:
        raise SchemaMismatch(
            f"input has {len(x)} columns, schema expects {model.n_features}"
        )
    return x


def _coalition_value(tree: Tree, col_group: np.ndarray, x: np.ndarray, mask: int) -> float:
    """v(S) for one tree: follow x on split features in S, coverage-average
    the rest. Literal form of the conditional-expectation definition."""

    def walk(node: int) -> float:
        f = tree.feature[node]
        if f < 0:
            return float(tree.value[node])
        if (mask >> col_group[f]) & 1:
            child = tree.children_left[node] if x[f] <= tree.threshold[node] else tree.children_right[node]
            return walk(int(child))
        left = int(tree.children_left[node])
        right = int(tree.children_right[node])
        return (
            tree.coverage[left] * walk(left) + tree.coverage[right] * walk(right)
        ) / tree.coverage[node]

    return walk(0)


def shap_exact(model: TreeEnsembleModel, x: np.ndarray, max_features: int = 12) -> Attribution:
    """Shapley values by full coalition enumeration over source features."""
    x = _check_input(model, x)
    groups, col_group = group_info(model.schema)
    m = len(groups)
    if m > max_features:
        raise TooManyFeatures(
            f"{m} source features exceed the enumeration cap {max_features}; use shap_fast"
        )
    n_masks = 1 << m
    v = np.zeros(n_masks, dtype=np.float64)
    for tree in model.trees:
        for mask in range(n_masks):
            v[mask] += _coalition_value(tree, col_group, x, mask)
    v /= len(model.trees)
    # Permutation weights |S|! (m-|S|-1)! / m!
    weights = np.array(
        [1.0 / (comb(m - 1, s) * m) for s in range(m)] if m else [], dtype=np.float64
    )
    popcount = np.array([bin(mask).count("1") for mask in range(n_masks)])
    phi_g = np.zeros(m, dtype=np.float64)
    for g in range(m):
        bit = 1 << g
        without = np.flatnonzero((np.arange(n_masks) & bit) == 0)
        phi_g[g] = float(np.sum(weights[popcount[without]] * (v[without | bit] - v[without])))
    return Attribution(
        base_value=float(v[0]),
        phi=_expand_phi(x, model.schema, col_group, phi_g),
        grouped_phi=phi_g,
        groups=groups,
        prediction_raw=float(v[n_masks - 1]),
    )


def shap_fast(model: TreeEnsembleModel, x: np.ndarray) -> Attribution:
    """Polynomial-time attribution; identical to shap_exact where the latter
    is feasible, but linear in total tree size for any feature count."""
    x = _check_input(model, x)
    groups, col_group = group_info(model.schema)
    m = len(groups)
    phi_g = np.zeros(m, dtype=np.float64)
    base = 0.0
    for tree in model.trees:
        node_group = np.where(tree.feature >= 0, col_group[tree.feature], -1).astype(np.int64)
        goes_left = np.zeros(tree.n_nodes, dtype=np.bool_)
        internal = tree.feature >= 0
        goes_left[internal] = (
            x[tree.feature[internal]] <= tree.threshold[internal]
        )
        phi_g += kernels.tree_shap(
            tree.children_left, tree.children_right, node_group,
            tree.coverage, tree.value, goes_left, m,
        )
        base += tree.base_value()
    phi_g /= len(model.trees)
    base /= len(model.trees)
    return Attribution(
        base_value=base,
        phi=_expand_phi(x, model.schema, col_group, phi_g),
        grouped_phi=phi_g,
        groups=groups,
        prediction_raw=float(model.predict_raw(x[None, :])[0]),
    )


def _phi_matrix(model: TreeEnsembleModel, X: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    groups, _ = group_info(model.schema)
    out = np.zeros((len(X), len(groups)))
    for i, row in enumerate(X):
        out[i] = shap_fast(model, row).grouped_phi
    return out, groups


@dataclass(frozen=True)
class SalienceReport:
    """Dataset-level feature importance: features ranked by mean |phi|,
    with the direction each feature pushes the prediction."""

    ranking: tuple[str, ...]
    mean_abs_phi: dict[str, float]
    direction: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "ranking": list(self.ranking),
            "mean_abs_phi": self.mean_abs_phi,
            "direction": self.direction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SalienceReport":
        return cls(
            ranking=tuple(d["ranking"]),
            mean_abs_phi=dict(d["mean_abs_phi"]),
            direction=dict(d["direction"]),
        )


def global_salience(model: TreeEnsembleModel, X: np.ndarray) -> SalienceReport:
    """Rank source features by mean |phi| over a dataset."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0:
        raise EmptyDataset("cannot rank features over an empty dataset")
    phis, groups = _phi_matrix(model, X)
    mean_abs = np.mean(np.abs(phis), axis=0)
    _, col_group = group_info(model.schema)
    direction: dict[str, str] = {}
    for g, name in enumerate(groups):
        cols = np.flatnonzero(col_group == g)
        if len(cols) == 1 and model.schema[cols[0]][1] != "one_hot_component":
            direction[name] = _direction_from(X[:, cols[0]], phis[:, g])
        else:
            for c in cols:
                col_name, kind = model.schema[c]
                if kind == "one_hot_component":
                    direction[col_name] = _direction_from(X[:, c], phis[:, g])
            if name not in direction and len(cols) > 0:
                direction[name] = _direction_from(X[:, cols[0]], phis[:, g])
    return SalienceReport(
        ranking=ranked_groups(groups, mean_abs),
        mean_abs_phi={name: float(v) for name, v in zip(groups, mean_abs)},
        direction=direction,
    )


def _direction_from(score: np.ndarray, phi: np.ndarray) -> str:
    cov = float(np.mean((score - score.mean()) * (phi - phi.mean())))
    if abs(cov) < DIRECTION_TOL:
        return "indeterminate"
    return "increases_priority" if cov > 0 else "decreases_priority"


def feature_direction(model: TreeEnsembleModel, X: np.ndarray, feature: str) -> str:
    """Whether a feature pushes predictions up or down across a dataset.

    ``feature`` is a schema column name: an ordinal/numeric source feature,
    or a qualified one-hot component like ``help_dynamic=giving_help``
    (direction of that value's presence).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0:
        raise EmptyDataset("cannot compute a direction over an empty dataset")
    groups, col_group = group_info(model.schema)
    names = [name for name, _ in model.schema]
    if feature in names:
        col = names.index(feature)
    elif feature in groups:
        cols = np.flatnonzero(col_group == groups.index(feature))
        if len(cols) != 1:
            raise UnknownFeature(
                f"{feature!r} is a one-hot feature; qualify a value as '{feature}=<value>'"
            )
        col = int(cols[0])
    else:
        raise UnknownFeature(f"{feature!r} is not in the model schema")
    phis, _ = _phi_matrix(model, X)
    return _direction_from(X[:, col], phis[:, col_group[col]])


def format_attribution(att: Attribution, schema: Sequence[tuple[str, str]]) -> str:
    """Human-readable attribution: base, per-column phi by |phi|, grouped view."""
    lines = [f"base value      {att.base_value:+.4f}",
             f"prediction raw  {att.prediction_raw:+.4f}"]
    order = np.argsort(-np.abs(att.phi), kind="stable")
    lines.append("per-column phi:")
    for i in order:
        if att.phi[i] == 0.0:
            continue
        lines.append(f"  {schema[i][0]:<32} {att.phi[i]:+.4f}")
    lines.append("per-feature phi:")
    for name in ranked_groups(att.groups, np.abs(att.grouped_phi)):
        g = att.groups.index(name)
        lines.append(f"  {name:<32} {att.grouped_phi[g]:+.4f}")
    return "\n".join(lines)
