import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from socialagenda.cli import EXIT_INPUT, EXIT_OK, build_parser, main

REPO = Path(__file__).resolve().parent.parent
SYNTH_CSV = REPO / "data" / "synthetic" / "situations.csv"

FAST_TRAIN = ["--grid", "none", "--trees", "12", "--depth", "6",
              "--min-leaf", "2", "--features-mode", "sqrt"]


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "small.csv"
    assert main(["synth", "--out", str(out), "--n", "160", "--seed", "7"]) == EXIT_OK
    return out


class TestValidate:
    def test_valid_dataset(self, small_csv, capsys):
        assert main(["validate", "--dataset", str(small_csv)]) == EXIT_OK
        assert "160 records" in capsys.readouterr().out

    def test_corrupt_file_reports_rows(self, small_csv, tmp_path, capsys):
        lines = small_csv.read_text().splitlines()
        lines[2] = lines[2].replace("work", "moon").replace("casual", "moon") \
                           .replace("family", "moon").replace("other,", "moon,")
        corrupt = tmp_path / "corrupt.csv"
        corrupt.write_text("\n".join(lines) + "\n")
        code = main(["validate", "--dataset", str(corrupt)])
        assert code == EXIT_INPUT
        err = capsys.readouterr().err
        assert "row 2" in err

    def test_missing_file(self, capsys):
        assert main(["validate", "--dataset", "/nonexistent.csv"]) == EXIT_INPUT


class TestTrainEvaluate:
    def test_train_writes_ten_models_and_report(self, small_csv, tmp_path):
        out = tmp_path / "models"
        code = main(["train", "--dataset", str(small_csv), "--out", str(out),
                     "--seed", "3", *FAST_TRAIN])
        assert code == EXIT_OK
        model_files = [p for p in out.iterdir()
                       if p.suffix == ".json"
                       and p.name not in ("salience.json", "training_report.json")]
        assert len(model_files) == 10
        report = json.loads((out / "training_report.json").read_text())
        assert report["seed"] == 3
        assert (out / "salience.json").exists()

    def test_seeded_runs_byte_identical(self, small_csv, tmp_path):
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            assert main(["train", "--dataset", str(small_csv), "--out", str(out),
                         "--seed", "5", *FAST_TRAIN]) == EXIT_OK
            outs.append(out)
        for path in sorted(outs[0].iterdir()):
            assert path.read_bytes() == (outs[1] / path.name).read_bytes(), path.name

    def test_evaluate_beats_baseline_on_synthetic(self, tmp_path, capsys):
        out = tmp_path / "eval"
        code = main(["evaluate", "--dataset", str(SYNTH_CSV), "--out", str(out),
                     "--seed", "11", *FAST_TRAIN])
        assert code == EXIT_OK
        report = json.loads((out / "evaluation.json").read_text())
        maes = report["priority_maes"]
        assert maes["features_direct"] < maes["baseline"]
        assert maes["true_profile"] < maes["baseline"]
        assert (out / "evaluation.txt").read_text().startswith("Characteristic prediction")

    def test_evaluate_with_pretrained_models(self, small_csv, tmp_path):
        models = tmp_path / "models"
        assert main(["train", "--dataset", str(small_csv), "--out", str(models),
                     "--seed", "3", *FAST_TRAIN]) == EXIT_OK
        out = tmp_path / "eval"
        code = main(["evaluate", "--dataset", str(small_csv), "--models", str(models),
                     "--out", str(out), "--seed", "3"])
        assert code == EXIT_OK
        assert (out / "evaluation.json").exists()


class TestExplain:
    def test_prints_attribution(self, small_csv, tmp_path, capsys):
        models = tmp_path / "models"
        assert main(["train", "--dataset", str(small_csv), "--out", str(models),
                     "--seed", "3", *FAST_TRAIN]) == EXIT_OK
        capsys.readouterr()
        code = main(["explain", "--dataset", str(small_csv), "--models", str(models),
                     "--row", "4"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "base value" in out and "per-feature phi" in out

    def test_row_out_of_range(self, small_csv, tmp_path, capsys):
        models = tmp_path / "models"
        assert main(["train", "--dataset", str(small_csv), "--out", str(models),
                     "--seed", "3", *FAST_TRAIN]) == EXIT_OK
        assert main(["explain", "--dataset", str(small_csv), "--models", str(models),
                     "--row", "99999"]) == EXIT_INPUT


class TestPairs:
    def test_paper_pair_printed_with_both_texts(self, capsys):
        assert main(["pairs"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "pair-01-help-duty" in out
        assert "suggestion: Meeting 2" in out
        assert ("Alice should attend Meeting 2 because she is expected to give help, "
                "while in Meeting 1 she isn't, and meetings where one is expected to "
                "give help are usually prioritized.") in out
        assert ("because it involves a higher level of duty, which means she is "
                "counted on to do something") in out
        assert out.count("== pair-") == 8


class TestConfigFile:
    def test_config_defaults_with_flag_precedence(self, small_csv, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scale": 6, "dataset": str(small_csv)}))
        assert main(["--config", str(cfg), "validate"]) == EXIT_OK
        # flag wins over config
        other = tmp_path / "missing.csv"
        assert main(["--config", str(cfg), "validate", "--dataset", str(other)]) == EXIT_INPUT


class TestHelp:
    def test_every_flag_documented_in_help(self):
        parser, commands = build_parser()
        for name, sub in commands.items():
            help_text = sub.format_help()
            for action in sub._actions:
                for option in action.option_strings:
                    assert option in help_text, (name, option)

    def test_help_exits_zero(self):
        for args in (["--help"], ["train", "--help"], ["pairs", "--help"]):
            with pytest.raises(SystemExit) as exc:
                main(args)
            assert exc.value.code == 0


def test_entry_point_runs_as_module():
    proc = subprocess.run(
        [sys.executable, "-m", "socialagenda.cli", "--version"],
        capture_output=True, text=True,
        env={**os.environ, "PYTHONPATH": str(REPO / "src")},
    )
    assert proc.returncode == 0
    assert "socialagenda" in proc.stdout
