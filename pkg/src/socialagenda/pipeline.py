"""The three-level prediction pipeline and its evaluation protocol.

Training produces ten models from one dataset: eight forests mapping social
situation features to one characteristic each, one forest mapping true
situation profiles to priority, and one forest mapping features directly to
priority (the comparison route). Priority for a new meeting composes the
first two: features -> predicted profile -> priority.

Evaluation reports per-target MAE against the predict-mean baseline with
rank-sum significance on per-example absolute errors, plus the three
priority routes side by side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .domain import CHARACTERISTICS, Priority, SituationProfile, SocialSituationFeatures
from .ingest import (
    DEFAULT_SEED,
    FeatureEncoder,
    ProfileEncoder,
    SituationRecord,
    dataset_fingerprint,
)
from .shapley import SalienceReport, global_salience
from .stats import rank_sum_test
from .trees import (
    HyperParams,
    MultiOutputForest,
    TreeEnsembleModel,
    cross_validate,
    default_grid,
    fit_forest,
    fit_forest_multi,
    fit_mean_baseline,
)

ALPHA = 0.05

PRIORITY_ROUTES = ("features_direct", "true_profile", "predicted_profile")


class PipelineError(ValueError):
    pass


class MissingLabels(PipelineError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    grid: Optional[Sequence[HyperParams]] = None  # None = default_grid()
    cv_folds: int = 5
    tune: bool = True
    seed: int = DEFAULT_SEED
    jobs: int = 1
    multi_output: bool = False  # one joint level-2 model instead of eight
    stamp: Optional[str] = None  # provenance timestamp; omitted by default
                                 # so equal seeds give byte-identical artifacts


@dataclass
class PipelineModel:
    """The trained architecture: eight level-2 models in canonical order, the
    profile->priority model, the features->priority comparison model, and the
    predict-mean baselines for every target."""

    level2_models: Optional[dict[str, TreeEnsembleModel]]
    priority_model: TreeEnsembleModel
    features_priority_model: TreeEnsembleModel
    baselines: dict[str, TreeEnsembleModel]
    metadata: dict = field(default_factory=dict)
    level2_multi: Optional[MultiOutputForest] = None
    salience: Optional[dict[str, SalienceReport]] = None

    def __post_init__(self):
        if self.level2_models is not None:
            if tuple(self.level2_models) != CHARACTERISTICS:
                raise PipelineError("level2 models must cover the 8 characteristics in order")


_ENCODER = FeatureEncoder()
_PROFILE_ENCODER = ProfileEncoder()


def _require_labels(records: Sequence[SituationRecord], what: str) -> None:
    missing = [i for i, r in enumerate(records) if r.profile is None or r.priority is None]
    if missing:
        raise MissingLabels(
            f"{what} records need profile and priority labels; "
            f"missing on rows {missing[:10]}{'...' if len(missing) > 10 else ''}"
        )


def _matrices(records: Sequence[SituationRecord]):
    X = _ENCODER.encode_matrix([r.features for r in records])
    P = _PROFILE_ENCODER.encode_matrix([r.profile for r in records])
    y = np.array([r.priority.value for r in records], dtype=np.float64)
    return X, P, y


def _tuned_fit(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    schema,
    target: str,
    salt: int,
) -> TreeEnsembleModel:
    seed = [config.seed, salt]
    if config.tune:
        grid = list(config.grid) if config.grid is not None else default_grid(config.seed)
        best, _ = cross_validate(
            X, y, grid, k=config.cv_folds, seed=config.seed + salt,
            schema=schema, target=target, jobs=config.jobs,
        )
    else:
        grid = list(config.grid) if config.grid is not None else [HyperParams(seed=config.seed)]
        best = grid[0]
    return fit_forest(X, y, best, schema=schema, target=target, seed=seed, jobs=config.jobs)


def train_pipeline(
    train: Sequence[SituationRecord], config: Optional[TrainConfig] = None
) -> PipelineModel:
    """Train the full architecture on labelled records, deterministically for
    a fixed config seed. Each model is tuned independently by k-fold CV."""
    config = config or TrainConfig()
    if not train:
        raise MissingLabels("empty training set")
    _require_labels(train, "training")
    X, P, y = _matrices(train)
    fingerprint = dataset_fingerprint(train)
    meta = {"seed": config.seed, "dataset_fingerprint": fingerprint,
            "n_train": len(train)}
    if config.stamp:
        meta["timestamp"] = config.stamp

    level2: Optional[dict[str, TreeEnsembleModel]] = None
    level2_multi = None
    if config.multi_output:
        hp = (list(config.grid) or [HyperParams(seed=config.seed)])[0] if config.grid else HyperParams(seed=config.seed)
        level2_multi = fit_forest_multi(
            X, P, hp, schema=_ENCODER.schema, targets=CHARACTERISTICS,
            seed=[config.seed, 100],
        )
    else:
        level2 = {}
        for ci, name in enumerate(CHARACTERISTICS):
            model = _tuned_fit(X, P[:, ci], config, _ENCODER.schema, name, salt=ci + 1)
            model.metadata.update(meta)
            level2[name] = model

    priority_model = _tuned_fit(P, y, config, _PROFILE_ENCODER.schema, "priority", salt=20)
    priority_model.metadata.update(meta)
    features_priority = _tuned_fit(X, y, config, _ENCODER.schema, "priority", salt=21)
    features_priority.metadata.update(meta)

    baselines = {
        name: fit_mean_baseline(P[:, ci], schema=_ENCODER.schema, target=name)
        for ci, name in enumerate(CHARACTERISTICS)
    }
    baselines["priority"] = fit_mean_baseline(y, schema=_PROFILE_ENCODER.schema, target="priority")

    salience = {
        "level1": global_salience(features_priority, X),
        "level2": global_salience(priority_model, P),
    }
    return PipelineModel(
        level2_models=level2,
        priority_model=priority_model,
        features_priority_model=features_priority,
        baselines=baselines,
        metadata=meta,
        level2_multi=level2_multi,
        salience=salience,
    )


def predict_profile(model: PipelineModel, features: SocialSituationFeatures) -> SituationProfile:
    """Level-1 -> Level-2: eight clamped predictions in canonical order."""
    x = _ENCODER.encode(features).values[None, :]
    if model.level2_models is not None:
        values = [float(model.level2_models[c].predict(x)[0]) for c in CHARACTERISTICS]
    else:
        values = model.level2_multi.predict(x)[0].tolist()
    return SituationProfile.from_vector(values)


def predict_priority(
    model: PipelineModel,
    true_profile: Optional[SituationProfile] = None,
    features: Optional[SocialSituationFeatures] = None,
) -> Priority:
    """Level-3 prediction. Exactly one input variant: a true profile is fed
    straight to the priority model; features go through predict_profile
    first, so the features variant is the composition by definition."""
    if (true_profile is None) == (features is None):
        raise PipelineError("supply exactly one of true_profile or features")
    if features is not None:
        true_profile = predict_profile(model, features)
    p = _PROFILE_ENCODER.encode(true_profile).values[None, :]
    return Priority(float(model.priority_model.predict(p)[0]))


@dataclass(frozen=True)
class TargetResult:
    target: str
    model_mae: float
    baseline_mae: float
    u_statistic: float
    p_value: float
    significant: bool  # model errors differ from baseline errors at ALPHA
    model_beats_baseline: bool


@dataclass(frozen=True)
class RouteComparison:
    route_a: str
    route_b: str
    u_statistic: float
    p_value: float
    significant: bool


@dataclass(frozen=True)
class EvaluationReport:
    characteristic_results: tuple[TargetResult, ...]
    priority_maes: dict[str, float]  # per route + baseline
    priority_comparisons: tuple[RouteComparison, ...]
    n_test: int
    dataset_fingerprint: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "characteristics": [vars(r) for r in self.characteristic_results],
            "priority_maes": self.priority_maes,
            "priority_comparisons": [vars(c) for c in self.priority_comparisons],
            "n_test": self.n_test,
            "dataset_fingerprint": self.dataset_fingerprint,
            "seed": self.seed,
            "alpha": ALPHA,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def format_tables(self) -> str:
        """Two human-readable tables: per-characteristic MAEs against the
        baseline, then the priority routes."""
        lines = ["Characteristic prediction (MAE, * = significant vs predict-mean at p<0.05)",
                 f"{'characteristic':<16}{'forest':>8}{'mean':>8}  p"]
        for r in self.characteristic_results:
            star = "*" if r.significant and r.model_beats_baseline else " "
            lines.append(
                f"{r.target + star:<16}{r.model_mae:>8.3f}{r.baseline_mae:>8.3f}  {r.p_value:.4f}"
            )
        lines.append("")
        lines.append("Priority prediction (MAE by input route)")
        labels = {
            "features_direct": "social situation features",
            "true_profile": "true psychological characteristics",
            "predicted_profile": "predicted psychological characteristics",
            "baseline": "predict mean",
        }
        for route in (*PRIORITY_ROUTES, "baseline"):
            lines.append(f"{labels[route]:<42}{self.priority_maes[route]:>8.3f}")
        lines.append("")
        lines.append("Route comparisons (rank-sum on absolute errors)")
        for c in self.priority_comparisons:
            flag = "*" if c.significant else " "
            lines.append(
                f"{c.route_a} vs {c.route_b}{flag:<2} U={c.u_statistic:.1f} p={c.p_value:.4f}"
            )
        return "\n".join(lines)


def _compare_errors(err_a: np.ndarray, err_b: np.ndarray) -> tuple[float, float]:
    return rank_sum_test(err_a, err_b, alternative="two_sided")


def evaluate(model: PipelineModel, test: Sequence[SituationRecord]) -> EvaluationReport:
    """Run the shared-split evaluation: every model and baseline scored on
    the same test records, significance from per-example absolute errors."""
    if not test:
        raise MissingLabels("empty test set")
    _require_labels(test, "test")
    X, P, y = _matrices(test)

    char_results = []
    for ci, name in enumerate(CHARACTERISTICS):
        truth = P[:, ci]
        if model.level2_models is not None:
            pred = model.level2_models[name].predict(X)
        else:
            pred = model.level2_multi.predict(X)[:, ci]
        base_pred = model.baselines[name].predict(np.zeros_like(X))
        err_model = np.abs(pred - truth)
        err_base = np.abs(base_pred - truth)
        u, p = _compare_errors(err_model, err_base)
        char_results.append(
            TargetResult(
                target=name,
                model_mae=float(np.mean(err_model)),
                baseline_mae=float(np.mean(err_base)),
                u_statistic=u,
                p_value=p,
                significant=p < ALPHA,
                model_beats_baseline=float(np.mean(err_model)) < float(np.mean(err_base)),
            )
        )

    # Priority routes on the shared test set.
    route_preds = {
        "features_direct": model.features_priority_model.predict(X),
        "true_profile": model.priority_model.predict(P),
    }
    if model.level2_models is not None:
        profile_hat = np.column_stack(
            [model.level2_models[c].predict(X) for c in CHARACTERISTICS]
        )
    else:
        profile_hat = model.level2_multi.predict(X)
    route_preds["predicted_profile"] = model.priority_model.predict(profile_hat)
    route_errors = {route: np.abs(pred - y) for route, pred in route_preds.items()}
    base_priority = model.baselines["priority"].predict(np.zeros_like(P))
    route_errors["baseline"] = np.abs(base_priority - y)
    priority_maes = {route: float(np.mean(err)) for route, err in route_errors.items()}

    comparisons = []
    pairs = [
        ("true_profile", "features_direct"),
        ("predicted_profile", "features_direct"),
        ("true_profile", "predicted_profile"),
        ("features_direct", "baseline"),
        ("true_profile", "baseline"),
        ("predicted_profile", "baseline"),
    ]
    for ra, rb in pairs:
        u, p = _compare_errors(route_errors[ra], route_errors[rb])
        comparisons.append(
            RouteComparison(route_a=ra, route_b=rb, u_statistic=u, p_value=p,
                            significant=p < ALPHA)
        )

    return EvaluationReport(
        characteristic_results=tuple(char_results),
        priority_maes=priority_maes,
        priority_comparisons=tuple(comparisons),
        n_test=len(test),
        dataset_fingerprint=dataset_fingerprint(test),
        seed=int(model.metadata.get("seed", -1)),
    )


# ---------------------------------------------------------------------------
# Artifact directory layout used by the CLI and the agenda service.

MODEL_FILES = {c: f"level2_{c}.json" for c in CHARACTERISTICS}
MODEL_FILES["priority"] = "priority_from_profile.json"
MODEL_FILES["features_priority"] = "priority_from_features.json"
SALIENCE_FILE = "salience.json"


def save_pipeline(model: PipelineModel, out_dir: Union[str, Path]) -> list[Path]:
    """Write the ten model files plus the salience sidecar; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if model.level2_models is None:
        raise PipelineError("multi-output pipelines are not serialized; train per-characteristic models")
    for name, m in model.level2_models.items():
        path = out / MODEL_FILES[name]
        m.save(path)
        written.append(path)
    model.priority_model.save(out / MODEL_FILES["priority"])
    written.append(out / MODEL_FILES["priority"])
    model.features_priority_model.save(out / MODEL_FILES["features_priority"])
    written.append(out / MODEL_FILES["features_priority"])
    if model.salience:
        payload = {
            "schema_version": "1",
            "metadata": model.metadata,
            "levels": {k: v.to_dict() for k, v in model.salience.items()},
            "baselines": {k: b.to_dict() for k, b in model.baselines.items()},
        }
        path = out / SALIENCE_FILE
        path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        written.append(path)
    return written


def load_pipeline(in_dir: Union[str, Path]) -> PipelineModel:
    src = Path(in_dir)
    level2 = {c: TreeEnsembleModel.load(src / MODEL_FILES[c]) for c in CHARACTERISTICS}
    priority_model = TreeEnsembleModel.load(src / MODEL_FILES["priority"])
    features_priority = TreeEnsembleModel.load(src / MODEL_FILES["features_priority"])
    salience = None
    baselines = {}
    metadata = dict(priority_model.metadata)
    sal_path = src / SALIENCE_FILE
    if sal_path.exists():
        payload = json.loads(sal_path.read_text(encoding="utf-8"))
        salience = {k: SalienceReport.from_dict(v) for k, v in payload["levels"].items()}
        baselines = {
            k: TreeEnsembleModel.from_dict(b) for k, b in payload.get("baselines", {}).items()
        }
        metadata = payload.get("metadata", metadata)
    return PipelineModel(
        level2_models=level2,
        priority_model=priority_model,
        features_priority_model=features_priority,
        baselines=baselines,
        metadata=metadata,
        salience=salience,
    )
