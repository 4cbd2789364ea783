"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL
line. Run with ``pytest tests/test_acceptance.py -v -s``.

The dataset-dependent reproduction criterion is skipped (not failed) when
the survey dataset is absent; point SOCIALAGENDA_DATASET_DIR at a directory
holding situations.csv (optionally with adapter.cfg) to enable it.
"""

import json
import os
import sys
import time
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    brute_force_shap,
    exhaustive_best_split,
    exhaustive_rank_sum_p,
    random_grouped_model,
)

REPO = Path(__file__).resolve().parent.parent


@contextmanager
def criterion(name):
    try:
        yield
    except Exception:
        print(f"FAIL  {name}", file=sys.stderr)
        raise
    print(f"PASS  {name}")


def test_shapley_oracle_equivalence():
    """500 randomized forests (<=10 groups, <=50 trees, depth <=5), 5 inputs
    each: fast attribution equals brute-force coalition enumeration within
    1e-6 per feature, in under 60 seconds."""
    from socialagenda.shapley import shap_fast

    with criterion("shapley oracle equivalence (500 forests x 5 inputs, <60s)"):
        rng = np.random.default_rng(20240001)
        start = time.monotonic()
        worst = 0.0
        for i in range(500):
            model, X = random_grouped_model(
                rng,
                n_groups=int(rng.integers(2, 11)),
                n_trees=int(rng.integers(1, 51)),
                max_depth=int(rng.integers(1, 6)),
                n_rows=int(rng.integers(10, 61)),
            )
            d = X.shape[1]
            for _ in range(5):
                x = rng.normal(size=d)
                fast = shap_fast(model, x)
                phi_o, base_o, full_o = brute_force_shap(model, x)
                gap = float(np.max(np.abs(fast.grouped_phi - phi_o)))
                worst = max(worst, gap)
                assert gap <= 1e-6, f"forest {i}: phi gap {gap:.3e}"
                assert abs(fast.base_value - base_o) <= 1e-6
        elapsed = time.monotonic() - start
        print(f"      worst per-feature gap {worst:.2e}, {elapsed:.1f}s")
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_local_accuracy_10000_cases():
    """base + sum(phi) equals the unclamped ensemble output within 1e-9 on
    10,000 random cases, for both algorithms."""
    from socialagenda.shapley import shap_exact, shap_fast

    with criterion("local accuracy 1e-9 on 10,000 cases (both algorithms)"):
        rng = np.random.default_rng(20240002)
        # fast path: moderate forests, 10,000 cases
        worst_fast = 0.0
        for _ in range(50):
            model, X = random_grouped_model(
                rng, n_groups=int(rng.integers(2, 11)),
                n_trees=int(rng.integers(1, 31)),
                max_depth=int(rng.integers(1, 6)), n_rows=40,
            )
            d = X.shape[1]
            xs = rng.normal(size=(200, d))
            preds = model.predict_raw(xs)
            for x, pred in zip(xs, preds):
                att = shap_fast(model, x)
                worst_fast = max(worst_fast,
                                 abs(att.base_value + att.grouped_phi.sum() - pred))
        assert worst_fast < 1e-9, f"fast path off by {worst_fast:.2e}"
        # exact path: smaller forests keep enumeration affordable
        worst_exact = 0.0
        for _ in range(100):
            model, X = random_grouped_model(
                rng, n_groups=int(rng.integers(2, 6)),
                n_trees=int(rng.integers(1, 9)),
                max_depth=int(rng.integers(1, 5)), n_rows=30,
            )
            d = X.shape[1]
            xs = rng.normal(size=(100, d))
            preds = model.predict_raw(xs)
            for x, pred in zip(xs, preds):
                att = shap_exact(model, x)
                worst_exact = max(worst_exact,
                                  abs(att.base_value + att.grouped_phi.sum() - pred))
        assert worst_exact < 1e-9, f"exact path off by {worst_exact:.2e}"
        print(f"      worst gaps: fast {worst_fast:.2e}, exact {worst_exact:.2e}")


def test_tree_learner_oracle():
    """On 200 random small datasets the fitted root split equals the
    exhaustive best split; unlimited-depth trees on distinct rows reach
    training MAE exactly 0."""
    from socialagenda.trees import (
        HyperParams, Internal, Leaf, TreeEnsembleModel, fit_tree,
        mean_absolute_error,
    )

    with criterion("tree-learner root-split oracle (200 datasets) + zero-MAE"):
        rng = np.random.default_rng(20240003)
        checked = 0
        for _ in range(200):
            n = int(rng.integers(2, 31))
            d = int(rng.integers(1, 7))
            X = rng.integers(0, 9, size=(n, d)).astype(float)
            y = rng.integers(0, 11, size=n).astype(float)
            min_leaf = int(rng.integers(1, 4))
            hp = HyperParams(n_trees=1, bootstrap=False, features_per_split="all",
                             min_samples_leaf=min_leaf, seed=0)
            tree = fit_tree(X, y, hp)
            expected = exhaustive_best_split(X, y, min_leaf=min_leaf)
            if np.all(y == y[0]) or n < 2 * min_leaf or expected is None:
                assert isinstance(tree.root, Leaf)
            else:
                assert isinstance(tree.root, Internal)
                assert (tree.root.feature_index, tree.root.threshold) == expected
                checked += 1
        assert checked >= 100  # most draws admit a split
        # distinct rows -> every row isolated -> exact fit
        for _ in range(50):
            n = int(rng.integers(2, 31))
            d = int(rng.integers(1, 4))
            while True:
                # wide value range so n distinct rows always exist
                X = rng.integers(0, 1000, size=(n, d)).astype(float)
                if len(np.unique(X, axis=0)) == n:
                    break
            y = rng.integers(0, 11, size=n).astype(float)
            hp = HyperParams(n_trees=1, bootstrap=False, features_per_split="all",
                             max_depth=None, min_samples_leaf=1, seed=0)
            tree = fit_tree(X, y, hp)
            model = TreeEnsembleModel([tree],
                                      tuple((f"x{i}", "numeric") for i in range(d)),
                                      None, hp)
            assert mean_absolute_error(y, model.predict(X)) == 0.0
        print(f"      {checked} root splits matched the exhaustive oracle")


def test_rank_sum_exactness():
    """Exact p equals exhaustive permutation enumeration for every sample
    size pair with n_a+n_b <= 10 and no ties; the {1,2,3} vs {4,5,6}
    one-sided case is exactly 0.05."""
    from socialagenda.stats import rank_sum_test

    with criterion("rank-sum exactness for all n_a+n_b <= 10 (no ties)"):
        u, p = rank_sum_test([1, 2, 3], [4, 5, 6], "less")
        assert (u, p) == (0.0, 0.05)
        rng = np.random.default_rng(20240004)
        pairs_checked = 0
        for total in range(2, 11):
            for n_a in range(1, total):
                n_b = total - n_a
                for _ in range(3):
                    pool = rng.permutation(1000)[:total].astype(float)
                    a, b = pool[:n_a].tolist(), pool[n_a:].tolist()
                    for alt in ("two_sided", "less", "greater"):
                        _, p = rank_sum_test(a, b, alt)
                        assert p == exhaustive_rank_sum_p(a, b, alt), (n_a, n_b, alt)
                    pairs_checked += 1
        print(f"      {pairs_checked} sample-size draws, 3 alternatives each")


def test_synthetic_pipeline_recovery():
    """On the bundled generator the forest beats the predict-mean baseline
    (rank-sum p < 0.05) and duty ranks first for priority salience, all
    inside five minutes."""
    from socialagenda import synth
    from socialagenda.ingest import ProfileEncoder, SplitSpec, split
    from socialagenda.pipeline import TrainConfig, evaluate, train_pipeline
    from socialagenda.stats import rank_sum_test
    from socialagenda.trees import HyperParams

    with criterion("synthetic-pipeline recovery (beats baseline, duty first, <5m)"):
        start = time.monotonic()
        records = synth.generate(synth.SynthSpec())  # the bundled defaults
        train, test = split(records, SplitSpec(seed=2224))
        config = TrainConfig(
            grid=[HyperParams(n_trees=100, max_depth=None, min_samples_leaf=2,
                              features_per_split="sqrt", seed=2224)],
            tune=False, seed=2224,
        )
        model = train_pipeline(train, config)
        report = evaluate(model, test)

        maes = report.priority_maes
        assert maes["true_profile"] < maes["baseline"]
        assert maes["features_direct"] < maes["baseline"]

        enc = ProfileEncoder()
        P = enc.encode_matrix([r.profile for r in test])
        y = np.array([r.priority.value for r in test])
        err_model = np.abs(model.priority_model.predict(P) - y)
        err_base = np.abs(model.baselines["priority"].predict(np.zeros_like(P)) - y)
        _, p = rank_sum_test(err_model, err_base, "less")
        assert p < 0.05, f"p={p}"

        salience = model.salience["level2"]
        assert salience.ranking[0] == "duty", salience.ranking

        elapsed = time.monotonic() - start
        assert elapsed < 300, f"took {elapsed:.0f}s"
        print(f"      priority MAE {maes['true_profile']:.3f} vs baseline "
              f"{maes['baseline']:.3f} (p={p:.2e}), duty first, {elapsed:.0f}s")


# Published reference numbers for the survey dataset (random forest column
# and predict-mean column; starred rows significantly beat the mean).
TABLE1_FOREST = {"duty": 1.34, "intellect": 1.17, "adversity": 1.29, "mating": 0.85,
                 "positivity": 1.14, "negativity": 1.25, "deception": 1.04,
                 "sociality": 1.02}
TABLE1_MEAN = {"duty": 1.55, "intellect": 1.3, "adversity": 1.36, "mating": 1.03,
               "positivity": 1.26, "negativity": 1.37, "deception": 1.09,
               "sociality": 1.13}
TABLE1_STARRED = ("duty", "intellect", "mating", "positivity", "negativity", "sociality")
TABLE2 = {"true_profile": 0.98, "features_direct": 1.35, "predicted_profile": 1.37}
TOLERANCE = 0.15


def test_survey_dataset_reproduction():
    """Tolerance-band reproduction of the published MAE tables; skipped when
    the survey dataset is not present."""
    data_dir = os.environ.get("SOCIALAGENDA_DATASET_DIR", "")
    csv = Path(data_dir) / "situations.csv" if data_dir else None
    if not csv or not csv.exists():
        print("SKIP  survey-dataset reproduction (dataset not present)")
        pytest.skip("survey dataset not present; set SOCIALAGENDA_DATASET_DIR")
    from socialagenda.cli import small_grid
    from socialagenda.ingest import SplitSpec, parse_situations, read_adapter_config, split
    from socialagenda.pipeline import TrainConfig, evaluate, train_pipeline

    with criterion("survey-dataset reproduction within +/-0.15 of the tables"):
        adapter = Path(data_dir) / "adapter.cfg"
        remap = read_adapter_config(adapter) if adapter.exists() else None
        records = parse_situations(csv, scale=6, remap=remap)
        train, test = split(records, SplitSpec(seed=2224))
        model = train_pipeline(train, TrainConfig(grid=small_grid(2224), seed=2224))
        report = evaluate(model, test)
        for route, expected in TABLE2.items():
            got = report.priority_maes[route]
            assert abs(got - expected) <= TOLERANCE, (route, got, expected)
        by_target = {r.target: r for r in report.characteristic_results}
        for name, expected in TABLE1_FOREST.items():
            got = by_target[name].model_mae
            assert abs(got - expected) <= TOLERANCE, (name, got, expected)
        for name, expected in TABLE1_MEAN.items():
            got = by_target[name].baseline_mae
            assert abs(got - expected) <= TOLERANCE, (name, got, expected)
        for name in TABLE1_STARRED:
            assert by_target[name].model_mae < by_target[name].baseline_mae, name


PAPER_LEVEL1 = ("Alice should attend Meeting 2 because she is expected to give help, "
                "while in Meeting 1 she isn't, and meetings where one is expected to "
                "give help are usually prioritized.")
PAPER_LEVEL2 = ("Alice should attend Meeting 2 because it involves a higher level of "
                "duty, which means she is counted on to do something, and meetings "
                "involving a higher level of duty are usually prioritized.")


def test_curated_pair_fidelity():
    """The reconstructed published pair suggests Meeting 2 with both texts
    byte-identical to the fixtures; all eight pairs pass uniqueness and
    level-agreement checks."""
    from socialagenda.explain import (
        decide_suggestion, find_differing_level1, find_differing_level2,
        load_directions, load_lexicon, load_scenario_pairs, pair_from_fixture,
        render_explanation,
    )

    with criterion("curated-pair fidelity (published texts byte-identical, 8/8 pairs)"):
        directions = load_directions()
        lexicon = load_lexicon()
        entries = load_scenario_pairs()
        assert len(entries) == 8
        paper = pair_from_fixture(entries[0])
        suggestion = decide_suggestion(paper, directions=directions)
        assert paper.label(suggestion.chosen) == "2"
        level1 = render_explanation(suggestion, "level1", paper, lexicon)
        level2 = render_explanation(suggestion, "level2", paper, lexicon)
        assert level1.text == PAPER_LEVEL1
        assert level2.text == PAPER_LEVEL2
        assert level1.text == entries[0]["expected"]["level1_text"]
        assert level2.text == entries[0]["expected"]["level2_text"]
        for entry in entries:
            pair = pair_from_fixture(entry)
            f1 = find_differing_level1(pair)  # unique or raises
            f2 = find_differing_level2(pair)
            sug = decide_suggestion(pair, directions=directions)  # levels agree
            assert sug.chosen == entry["expected"]["suggestion"]
            for style in ("level1", "level2"):
                text = render_explanation(sug, style, pair, lexicon).text
                assert text == entry["expected"][f"{style}_text"], (pair.pair_id, style)


def test_service_durability_and_determinism(tmp_path, tiny_pipeline):
    """Replaying the persisted log reproduces state exactly, and the
    suggestion endpoint returns identical bytes across 100 calls."""
    from fastapi.testclient import TestClient

    from socialagenda.agenda import AgendaStore
    from socialagenda.server import create_app

    with criterion("service durability + deterministic suggestions (100 calls)"):
        model, _, _ = tiny_pipeline
        t0 = datetime(2024, 5, 6, 9, 0, tzinfo=timezone.utc)
        rel = dict(role="colleague", hierarchy_level="equal", contact_frequency=4,
                   geographical_distance=1, years_known=3, relationship_quality=5,
                   depth_of_acquaintance=4, formality_level=5, shared_interests=4)

        store = AgendaStore(tmp_path)
        with TestClient(create_app(store, model)) as client:
            client.put("/contacts/c1", json={"name": "Ana"})
            client.put("/contacts/c2", json={"name": "Bo"})
            client.put("/contacts/c1/relationship", json=rel)
            client.put("/contacts/c2/relationship", json=dict(rel, role="friend"))
            for mid, (s, e, contact, cues) in {
                "m1": (0, 2, "c1", {"help_dynamic": "giving_help"}),
                "m2": (1, 3, "c2", {"setting": "casual"}),
            }.items():
                client.post("/meetings", json={
                    "id": mid, "title": mid, "contact_id": contact,
                    "start": (t0 + timedelta(hours=s)).isoformat(),
                    "end": (t0 + timedelta(hours=e)).isoformat(),
                    "created_at": t0.isoformat(),
                    "setting": "work", "event_frequency": "weekly",
                    "initiator": "other_person", "help_dynamic": "neither", **cues})
            cid = client.get("/conflicts").json()["conflicts"][0]["id"]
            bodies = {client.get(f"/conflicts/{cid}/suggestion").content
                      for _ in range(100)}
            assert len(bodies) == 1
            reference = bodies.pop()
            client.post(f"/conflicts/{cid}/feedback", json={
                "suggested_meeting_id": json.loads(reference)["suggestion"]["meeting_id"],
                "decision": "accepted", "shown_styles": ["level1", "level2"]})

        replayed = AgendaStore(tmp_path)
        assert replayed.contacts == store.contacts
        assert replayed.relationships == store.relationships
        assert replayed.meetings == store.meetings
        assert replayed.feedback == store.feedback
        with TestClient(create_app(replayed, model)) as client:
            again = {client.get(f"/conflicts/{cid}/suggestion").content
                     for _ in range(100)}
            assert again == {reference}
