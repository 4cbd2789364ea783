"""Command line entry point: validate, train, evaluate, explain, pairs,
serve, synth.

Exit codes: 0 success, 2 usage (argparse), 3 input/validation problems,
4 training or evaluation failures, 5 unexpected internal errors. All
diagnostics go to stderr; artifacts and reports to --out.

Every command accepts ``--config FILE`` (JSON object of flag defaults);
explicit flags win over the file. The default seed is 2224 everywhere so
repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .domain import CHARACTERISTICS
from .ingest import (
    DEFAULT_SEED,
    IngestError,
    RowError,
    SplitSpec,
    parse_situations,
    read_adapter_config,
    split,
    write_situations,
)
from .pipeline import (
    MissingLabels,
    PipelineError,
    TrainConfig,
    evaluate,
    load_pipeline,
    save_pipeline,
    train_pipeline,
)
from .trees import HyperParams, TreeLearningError, default_grid

EXIT_OK = 0
EXIT_INPUT = 3
EXIT_TRAINING = 4
EXIT_INTERNAL = 5


def small_grid(seed: int) -> list[HyperParams]:
    """A three-cell grid for quick runs; the full default grid is the
    spec for reproduction runs and takes correspondingly long."""
    return [
        HyperParams(n_trees=100, max_depth=None, min_samples_leaf=2,
                    features_per_split="sqrt", seed=seed),
        HyperParams(n_trees=100, max_depth=8, min_samples_leaf=2,
                    features_per_split="one_third", seed=seed),
        HyperParams(n_trees=100, max_depth=8, min_samples_leaf=5,
                    features_per_split="all", seed=seed),
    ]


def _grid_from_args(args) -> TrainConfig:
    if args.grid == "none":
        hp = HyperParams(
            n_trees=args.trees, max_depth=args.depth, min_samples_leaf=args.min_leaf,
            features_per_split=args.features_mode, bootstrap=not args.no_bootstrap,
            seed=args.seed,
        )
        return TrainConfig(grid=[hp], tune=False, seed=args.seed, jobs=args.jobs,
                           cv_folds=args.cv_folds, stamp=args.stamp)
    grid = default_grid(args.seed) if args.grid == "default" else small_grid(args.seed)
    return TrainConfig(grid=grid, tune=True, seed=args.seed, jobs=args.jobs,
                       cv_folds=args.cv_folds, stamp=args.stamp)


def _load_records(args):
    remap = read_adapter_config(args.adapter) if getattr(args, "adapter", None) else None
    return parse_situations(args.dataset, scale=args.scale, remap=remap)


def _split_records(records, args):
    return split(records, SplitSpec(test_fraction=args.test_fraction, seed=args.seed,
                                    group_by_participant=args.group_by_participant))


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="situations CSV path")
    p.add_argument("--scale", type=int, default=6, choices=(6, 7),
                   help="characteristic scale the dataset is annotated on")
    p.add_argument("--adapter", help="column remap file (external=canonical lines)")


def _add_split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--test-fraction", type=float, default=0.2, help="held-out fraction")
    p.add_argument("--group-by-participant", action="store_true",
                   help="keep each participant's records on one side of the split")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", choices=("default", "small", "none"), default="default",
                   help="tuning grid: full default grid, small 3-cell grid, or no tuning")
    p.add_argument("--trees", type=int, default=300, help="n_trees when --grid none")
    p.add_argument("--depth", type=int, default=None, help="max depth when --grid none")
    p.add_argument("--min-leaf", type=int, default=1, help="min samples per leaf when --grid none")
    p.add_argument("--features-mode", choices=("all", "sqrt", "one_third"), default="all",
                   help="features per split when --grid none")
    p.add_argument("--no-bootstrap", action="store_true", help="disable bootstrap resampling")
    p.add_argument("--cv-folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--jobs", type=int, default=1, help="parallel tree-building threads")
    p.add_argument("--stamp", help="provenance timestamp string to embed in artifacts "
                                   "(omitted by default to keep runs byte-identical)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="socialagenda",
                                     description="socially aware agenda assistant toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file of flag defaults; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = commands["validate"] = sub.add_parser("validate", help="parse a dataset and report every malformed row")
    _add_dataset_args(p)

    p = commands["train"] = sub.add_parser("train", help="train the full pipeline and write model files")
    _add_dataset_args(p)
    _add_split_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    p.add_argument("--out", required=True, help="output directory for model files")

    p = commands["evaluate"] = sub.add_parser("evaluate", help="train (or load) models and score the held-out split")
    _add_dataset_args(p)
    _add_split_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
    p.add_argument("--models", help="directory of pretrained model files (skips training)")
    p.add_argument("--out", required=True, help="output directory for reports")

    p = commands["explain"] = sub.add_parser("explain", help="print attribution for one situation")
    _add_dataset_args(p)
    p.add_argument("--models", required=True, help="trained model directory")
    p.add_argument("--row", type=int, default=0, help="0-based dataset row to explain")
    p.add_argument("--model", choices=("features_priority", "priority", *CHARACTERISTICS),
                   default="features_priority", help="which model to explain")

    p = commands["pairs"] = sub.add_parser("pairs", help="run the curated scenario pairs end to end")
    p.add_argument("--style", choices=("both", "level1", "level2", "control"),
                   default="both", help="explanation styles to print")

    p = commands["serve"] = sub.add_parser("serve", help="run the agenda HTTP service")
    p.add_argument("--store", required=True, help="store directory (log + snapshot)")
    p.add_argument("--models", required=True, help="trained model directory")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8008, help="bind port")
    p.add_argument("--token", help="bearer token required on every endpoint but /healthz")
    p.add_argument("--user-name", default="Alice", help="name used in explanations")

    p = commands["synth"] = sub.add_parser("synth", help="generate the bundled synthetic dataset")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--n", type=int, default=600, help="number of situations")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="generator seed")
    p.add_argument("--sigma", type=float, default=0.3, help="profile noise sigma")
    p.add_argument("--real-labels", action="store_true",
                   help="keep continuous labels instead of Likert integers")

    return parser, commands


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    # Config file values become defaults; explicit flags still win because
    # argparse only falls back to defaults for absent flags.
    if "--config" in argv:
        idx = argv.index("--config")
        try:
            config = json.loads(Path(argv[idx + 1]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError, IndexError) as err:
            print(f"error: cannot read config: {err}", file=sys.stderr)
            return EXIT_INPUT
        for sub in subparsers.values():
            sub.set_defaults(**config)
            for action in sub._actions:
                if action.dest in config and action.required:
                    action.required = False
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except RowError as err:
        for row, message in err.errors:
            print(f"row {row}: {message}", file=sys.stderr)
        return EXIT_INPUT
    except (IngestError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (TreeLearningError, PipelineError, MissingLabels) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_TRAINING
    except Exception as err:  # pragma: no cover - last resort
        print(f"internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL


def _dispatch(args) -> int:
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "train":
        return _cmd_train(args)
    if args.command == "evaluate":
        return _cmd_evaluate(args)
    if args.command == "explain":
        return _cmd_explain(args)
    if args.command == "pairs":
        return _cmd_pairs(args)
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "synth":
        return _cmd_synth(args)
    raise ValueError(f"unknown command {args.command!r}")


def _cmd_validate(args) -> int:
    records = _load_records(args)
    labelled = sum(1 for r in records if r.profile is not None and r.priority is not None)
    print(f"{len(records)} records parsed, {labelled} fully labelled")
    return EXIT_OK


def _cmd_train(args) -> int:
    records = _load_records(args)
    train, test = _split_records(records, args)
    config = _grid_from_args(args)
    model = train_pipeline(train, config)
    model.metadata["split"] = {
        "seed": args.seed,
        "test_fraction": args.test_fraction,
        "group_by_participant": args.group_by_participant,
        "n_train": len(train),
        "n_test": len(test),
    }
    out = Path(args.out)
    written = save_pipeline(model, out)
    report = {
        "schema_version": "1",
        "seed": args.seed,
        "dataset_fingerprint": model.metadata["dataset_fingerprint"],
        "n_train": len(train),
        "n_test": len(test),
        "models": {
            name: m.hyperparams.to_dict()
            for name, m in {
                **(model.level2_models or {}),
                "priority": model.priority_model,
                "features_priority": model.features_priority_model,
            }.items()
        },
    }
    path = out / "training_report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(written) + 1} files to {out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    records = _load_records(args)
    train, test = _split_records(records, args)
    if args.models:
        model = load_pipeline(args.models)
    else:
        model = train_pipeline(train, _grid_from_args(args))
    report = evaluate(model, test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "evaluation.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "evaluation.txt").write_text(report.format_tables() + "\n", encoding="utf-8")
    print(report.format_tables())
    return EXIT_OK


def _cmd_explain(args) -> int:
    from .ingest import FeatureEncoder, ProfileEncoder
    from .shapley import format_attribution, shap_fast

    model = load_pipeline(args.models)
    records = _load_records(args)
    if not 0 <= args.row < len(records):
        print(f"error: row {args.row} outside 0..{len(records) - 1}", file=sys.stderr)
        return EXIT_INPUT
    record = records[args.row]
    if args.model == "priority":
        if record.profile is None:
            print("error: record has no profile to feed the priority model", file=sys.stderr)
            return EXIT_INPUT
        target_model = model.priority_model
        x = ProfileEncoder().encode(record.profile).values
    else:
        target_model = (
            model.features_priority_model
            if args.model == "features_priority"
            else model.level2_models[args.model]
        )
        x = FeatureEncoder().encode(record.features).values
    att = shap_fast(target_model, x)
    print(f"model: {args.model}  row: {args.row}  "
          f"participant: {record.participant_id}  contact: {record.contact_id}")
    print(format_attribution(att, target_model.schema))
    return EXIT_OK


def _cmd_pairs(args) -> int:
    from .explain import (
        decide_suggestion,
        find_differing_level1,
        find_differing_level2,
        load_directions,
        load_lexicon,
        load_scenario_pairs,
        pair_from_fixture,
        render_explanation,
    )

    directions = load_directions()
    lexicon = load_lexicon()
    styles = ("level1", "level2") if args.style == "both" else (args.style,)
    failures = 0
    for entry in load_scenario_pairs():
        pair = pair_from_fixture(entry)
        try:
            f1 = find_differing_level1(pair)
            f2 = find_differing_level2(pair)
            suggestion = decide_suggestion(pair, directions=directions)
        except Exception as err:
            print(f"{pair.pair_id}: FAILED: {err}", file=sys.stderr)
            failures += 1
            continue
        print(f"== {pair.pair_id} [{entry.get('source', 'reconstructed')}] "
              f"(differs: {f1} / {f2})")
        print(f"   Meeting 1: {pair.description_a}")
        print(f"   Meeting 2: {pair.description_b}")
        print(f"   suggestion: Meeting {pair.label(suggestion.chosen)}")
        for style in styles:
            rendered = render_explanation(suggestion, style, pair, lexicon)
            print(f"   {style}: {rendered.text}")
    if failures:
        print(f"{failures} pair(s) failed", file=sys.stderr)
        return EXIT_TRAINING
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .agenda import AgendaStore
    from .server import create_app

    store = AgendaStore(args.store)
    model = load_pipeline(args.models)
    app = create_app(store, model, token=args.token, user_name=args.user_name)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import SynthSpec, generate

    records = generate(SynthSpec(n_situations=args.n, seed=args.seed,
                                 noise_sigma=args.sigma,
                                 integer_labels=not args.real_labels))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_situations(records, out)
    print(f"wrote {len(records)} records to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
