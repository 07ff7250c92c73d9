"""End-to-end tests of the pipeline driver and the command line."""

import hashlib
import json

import pytest
import yaml

from typogen import fixtures as fx
from typogen.cli import main
from typogen.errors import ConfigError
from typogen.pipeline import load_config, parse_config, run_pipeline


def read_outputs(d, skip=("timings.json",)):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file() and p.name not in skip}


@pytest.fixture(scope="module")
def head_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("head")
    assert main(["synth-fixture", "--head-only", "--out-dir", str(d)]) == 0
    return d


def edited_config(src, dst, **changes):
    cfg = yaml.safe_load(src.read_text())
    for key, value in changes.items():
        cfg[key] = value
    dst.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return dst


class TestRun:
    def test_head_only_run(self, head_dir, tmp_path, capsys):
        assert main(["run", "--config", str(head_dir / "config.yaml"), "--out-dir", str(tmp_path)]) == 0
        assert "run: ok" in capsys.readouterr().out
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["stage_counts"]["pattern_typology"]["classes"] == 6
        assert m["stage_counts"]["pattern_typology"]["covered"] == 346
        assert not (tmp_path / "error.json").exists()

    def test_manifest_hashes(self, head_dir, tmp_path):
        main(["run", "--config", str(head_dir / "config.yaml"), "--out-dir", str(tmp_path)])
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["config_sha256"] == hashlib.sha256((head_dir / "config.yaml").read_bytes()).hexdigest()
        assert set(m["outputs"]) == set(read_outputs(tmp_path)) - {"manifest.json"}
        for name, digest in m["outputs"].items():
            assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest

    def test_survey_manifest(self, survey_run):
        m = json.loads((survey_run.out_dir / "manifest.json").read_text())
        assert m["stage_counts"]["pattern_typology"]["classes"] == 6
        assert m["stage_counts"]["trees"]["selected_leaves"] == 5
        assert m["stages"][0] == "dataset"
        for name in ("comparison_curve_tree.md", "odds_ratios_tree.csv", "selected_tree.json", "assignments.csv"):
            assert (survey_run.out_dir / name).exists()

    def test_threads_do_not_change_outputs(self, head_dir, tmp_path):
        cfg = str(head_dir / "config.yaml")
        assert main(["run", "--config", cfg, "--out-dir", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert main(["run", "--config", cfg, "--out-dir", str(tmp_path / "b"), "--threads", "4"]) == 0
        assert read_outputs(tmp_path / "a") == read_outputs(tmp_path / "b")

    def test_vacuous_settings(self, head_dir, tmp_path):
        cfg = edited_config(head_dir / "config.yaml", head_dir / "vacuous.yaml",
                            patterns={"threshold": 1.0, "denominator": "all_respondents", "pool_size": 15},
                            trees={"min_leaf_grow": 40, "min_leaf_filter": 40, "max_leaf_filter": 435,
                                   "exclude_questions": []})
        status, pipe = run_pipeline(cfg, tmp_path)
        assert status == 0
        assert pipe.pattern_typology.k == 15
        assert pipe.pattern_typology.covered == 435
        assert "EXCLUDED" not in pipe.assignments["pattern"]

    def test_partial_target(self, head_dir, tmp_path):
        assert main(["patterns", "--config", str(head_dir / "config.yaml"), "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "patterns.csv").exists()
        assert not (tmp_path / "trees.json").exists()


class TestExitCodes:
    def test_missing_dataset(self, head_dir, tmp_path):
        cfg = yaml.safe_load((head_dir / "config.yaml").read_text())
        cfg["dataset"]["path"] = "nowhere.csv"
        (head_dir / "missing.yaml").write_text(yaml.safe_dump(cfg))
        assert main(["run", "--config", str(head_dir / "missing.yaml"), "--out-dir", str(tmp_path)]) == 2
        err = json.loads((tmp_path / "error.json").read_text())
        assert err["stage"] == "dataset" and err["exit_code"] == 2

    @pytest.mark.parametrize("text", ["models: [unclosed", "patterns: {threshold: 2.0}\n", "- just\n- a list\n"])
    def test_bad_config(self, head_dir, tmp_path, text):
        path = tmp_path / "bad.yaml"
        path.write_text(text)
        assert main(["run", "--config", str(path), "--out-dir", str(tmp_path / "o")]) == 1
        assert json.loads((tmp_path / "o" / "error.json").read_text())["stage"] == "config"

    def test_numerical_failure(self, head_dir, tmp_path):
        # a predictor that decides the outcome separates the classes
        cfg = edited_config(head_dir / "config.yaml", head_dir / "separated.yaml",
                            direct_items=[{"id": "deactivated", "name": "Deact"}],
                            models=[{"name": "m", "typology": "tree", "stepwise": False}])
        assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 3
        err = json.loads((tmp_path / "error.json").read_text())
        assert err["stage"] == "model:m" and err["error"] == "SeparationError"
        assert "dataset" in err["completed_stages"]

    def test_config_needed(self):
        with pytest.raises(SystemExit):
            main(["run"])

    def test_bad_tree_override(self, head_dir, tmp_path):
        args = ["trees", "--config", str(head_dir / "config.yaml"), "--out-dir", str(tmp_path),
                "--min-leaf-grow", "50", "--min-leaf-filter", "10"]
        assert main(args) == 1


class TestCommands:
    def test_validate(self, head_dir, capsys):
        assert main(["validate", "--config", str(head_dir / "config.yaml")]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["status"] == "ok" and out["respondents"] == 435 and out["questions"] == 7

    def test_flags_before_subcommand(self, head_dir, tmp_path):
        cfg = str(head_dir / "config.yaml")
        assert main(["--config", cfg, "--out-dir", str(tmp_path / "a"), "patterns"]) == 0
        assert main(["patterns", "--config", cfg, "--out-dir", str(tmp_path / "b")]) == 0
        assert read_outputs(tmp_path / "a") == read_outputs(tmp_path / "b")

    def test_synth_full(self, tmp_path):
        assert main(["synth-fixture", "--out-dir", str(tmp_path), "--seed", "3"]) == 0
        cfg = load_config(tmp_path / "config.yaml")
        assert cfg.seed == 3 and cfg.dataset_path.exists()
        assert len(cfg.models) == 3

    def test_tree_override(self, head_dir, tmp_path):
        args = ["trees", "--config", str(head_dir / "config.yaml"), "--out-dir", str(tmp_path),
                "--exclude-question", "deactivated", "--exclude-question", "FBmorethan1"]
        assert main(args) == 0
        assert "deactivated" not in (tmp_path / "selected_tree.json").read_text()

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert "typogen" in capsys.readouterr().out


class TestConfig:
    def test_round_trip_sha(self, survey_fixture_dir):
        a = load_config(survey_fixture_dir / "config.yaml")
        b = load_config(survey_fixture_dir / "config.yaml")
        assert a.sha256 == b.sha256
        assert a.constraints.excluded_questions == frozenset({"FBmorethan1"})

    @pytest.mark.parametrize("patch", [
        {"patterns": {"denominator": "sometimes"}},
        {"models": [{"name": "m", "typology": "nowhere"}]},
        {"comparisons": [{"a": "curve", "b": "ghost"}]},
        {"unknown_key": 1},
    ])
    def test_invalid(self, survey_fixture_dir, patch):
        data = fx.survey_config("survey.csv", 0) | patch
        with pytest.raises(ConfigError):
            parse_config(data, survey_fixture_dir)
