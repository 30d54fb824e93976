"""Command-line interface: subcommands, exit codes, and output files."""

from __future__ import annotations

import json
import subprocess
import sys
import time

import pytest

from hyperec.cli import main
from hyperec.config import RunConfig, config_from_dict, default_config_json
from hyperec.data import save_interactions
from hyperec.evaluation import run_experiment
from hyperec.synthetic import fixture_dataset

from conftest import FAST_HYPERPARAMS, FIXTURE_SEED

HYBRID_WEIGHTS = {"bpr": 1.0, "warp": 1.0, "wrmf": 1.0}


@pytest.fixture(scope="module")
def dataset_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "interactions.csv"
    save_interactions(fixture_dataset(), path)
    return path


def _config_doc(dataset_csv, out_dir) -> dict:
    return {
        "dataset": {"path": str(dataset_csv)},
        "split": {"seed": FIXTURE_SEED},
        "hyperparams": dict(FAST_HYPERPARAMS),
        "ranker": {"vartheta": 0.35},
        "hybrid": {"weights": dict(HYBRID_WEIGHTS)},
        "output": str(out_dir),
    }


def _write_config(tmp_path, dataset_csv, out_dir, **extra):
    doc = _config_doc(dataset_csv, out_dir)
    doc.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def full_run(dataset_csv, tmp_path_factory):
    """One end-to-end `run` shared by the artifact assertions below."""
    tmp = tmp_path_factory.mktemp("run")
    out = tmp / "out"
    config = _write_config(tmp, dataset_csv, out)
    start = time.monotonic()
    code = main(["run", "--config", str(config)])
    elapsed = time.monotonic() - start
    assert code == 0
    assert elapsed < 60.0, f"fixture pipeline took {elapsed:.1f}s"
    return out


def test_dump_config_round_trips(capsys):
    assert main(["--dump-config"]) == 0
    text = capsys.readouterr().out
    assert text == default_config_json()
    cfg = config_from_dict(json.loads(text))
    defaults = RunConfig()
    defaults.dataset_path = "interactions.csv"
    assert cfg == defaults


def test_run_writes_all_artifacts(full_run):
    for name in ("split.json", "stats.json", "report.json", "report.csv",
                 "report.txt", "ranker_params.json", "model_ranks.json",
                 "hybrid_weights.json"):
        assert (full_run / name).is_file(), name
    for model in ("bpr", "warp", "wrmf", "Hybrid", "H", "HypeRS", "HypeRS_W"):
        assert (full_run / f"rankings_{model}.csv").is_file(), model
    for model in ("bpr", "warp", "wrmf"):
        assert (full_run / f"factors_{model}.npz").is_file(), model
    for name in ("H", "HypeRS", "HypeRS_W"):
        assert (full_run / f"edge_weights_{name}.csv").is_file(), name
    figure = full_run / "figures" / "metrics_at_10.png"
    assert figure.is_file() and figure.stat().st_size > 0


def test_run_report_contents(full_run):
    doc = json.loads((full_run / "report.json").read_text())
    assert doc["k"] == 10
    names = [row["model"] for row in doc["results"]]
    assert names == ["bpr", "warp", "wrmf", "H", "Hybrid", "HypeRS", "HypeRS_W"]
    for row in doc["results"]:
        assert 0.0 <= row["precision"] <= 1.0

    csv_lines = (full_run / "report.csv").read_text().splitlines()
    assert csv_lines[0] == "model,k,precision,recall,f1"
    assert len(csv_lines) == 1 + len(names)

    txt = (full_run / "report.txt").read_text()
    assert txt.splitlines()[0].split() == ["model", "precision@10",
                                           "recall@10", "f1@10"]


def test_run_matches_library_path(full_run, dataset_csv):
    config = RunConfig(dataset_path=str(dataset_csv), seed=FIXTURE_SEED,
                       hyperparams=dict(FAST_HYPERPARAMS), vartheta=0.35,
                       hybrid_weights=dict(HYBRID_WEIGHTS))
    result = run_experiment(config)
    doc = json.loads((full_run / "report.json").read_text())
    assert doc["results"] == [r.as_dict() for r in result.reports]


def test_staged_equals_run(full_run, dataset_csv, tmp_path):
    out = tmp_path / "staged"
    config = _write_config(tmp_path, dataset_csv, out)
    for stage in ("prepare", "train", "rank", "evaluate"):
        assert main([stage, "--config", str(config)]) == 0, stage
    assert (out / "report.json").read_bytes() == \
        (full_run / "report.json").read_bytes()
    assert (out / "split.json").read_bytes() == \
        (full_run / "split.json").read_bytes()


def test_evaluate_is_resumable(full_run, dataset_csv, tmp_path, capsys):
    config = _write_config(tmp_path, dataset_csv, full_run)
    before = (full_run / "report.json").read_bytes()
    (full_run / "report.json").unlink()
    assert main(["evaluate", "--config", str(config)]) == 0
    assert (full_run / "report.json").read_bytes() == before
    table = capsys.readouterr().out
    assert "HypeRS_W" in table and "precision@10" in table


def test_prepare_is_deterministic(dataset_csv, tmp_path, capsys):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        config = _write_config(tmp_path, dataset_csv, out)
        assert main(["prepare", "--config", str(config)]) == 0
        outs.append(out)
    assert (outs[0] / "split.json").read_bytes() == \
        (outs[1] / "split.json").read_bytes()
    assert "split written to" in capsys.readouterr().out


def test_output_override_flag(dataset_csv, tmp_path):
    config = _write_config(tmp_path, dataset_csv, tmp_path / "ignored")
    override = tmp_path / "elsewhere"
    assert main(["prepare", "--config", str(config),
                 "--output", str(override)]) == 0
    assert (override / "split.json").is_file()
    assert not (tmp_path / "ignored").exists()


# ---------------------------------------------------------------------------
# exit codes

def test_exit_usage_on_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1
    assert "config" in capsys.readouterr().err


def test_exit_usage_on_bad_flag(capsys):
    assert main(["run", "--config", "x", "--bogus"]) == 1
    assert "error" in capsys.readouterr().err


def test_exit_usage_on_missing_subcommand(capsys):
    assert main([]) == 1
    assert "subcommand" in capsys.readouterr().err


def test_exit_usage_on_unknown_model(dataset_csv, tmp_path, capsys):
    config = _write_config(tmp_path, dataset_csv, tmp_path / "out",
                           models=["bpr", "svd"])
    assert main(["run", "--config", str(config)]) == 1
    assert "unknown built-in model" in capsys.readouterr().err


def test_exit_data_on_missing_dataset(tmp_path, capsys):
    config = _write_config(tmp_path, tmp_path / "absent.csv", tmp_path / "out")
    assert main(["run", "--config", str(config)]) == 2
    assert "not found" in capsys.readouterr().err


def test_exit_data_on_rank_before_train(dataset_csv, tmp_path, capsys):
    out = tmp_path / "out"
    config = _write_config(tmp_path, dataset_csv, out)
    assert main(["prepare", "--config", str(config)]) == 0
    assert main(["rank", "--config", str(config)]) == 2
    assert "run train first" in capsys.readouterr().err


def test_exit_numeric_on_divergence(dataset_csv, tmp_path, capsys):
    config = _write_config(
        tmp_path, dataset_csv, tmp_path / "out",
        models=["bpr"],
        hyperparams={"bpr": {"iterations": 40, "learning_rate": 1e6}},
        hybrid={"weights": {"bpr": 1.0}})
    assert main(["run", "--config", str(config)]) == 3
    assert "diverged" in capsys.readouterr().err


def test_console_script_installed(tmp_path):
    proc = subprocess.run([sys.executable, "-c",
                           "from hyperec.cli import main; "
                           "raise SystemExit(main(['--dump-config']))"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["k"] == 10
