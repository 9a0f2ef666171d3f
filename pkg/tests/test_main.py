from __future__ import annotations

import json
from pathlib import Path
import sys

import pandas as pd
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
PROJECT_SRC = PROJECT_ROOT / "src"
if str(PROJECT_SRC) not in sys.path:
    sys.path.insert(0, str(PROJECT_SRC))

from platoon_glosa.main import EXIT_OK, EXIT_USAGE, main

SMALL_CONFIG = """\
scenario:
  horizon_s: 40.0
  corridor:
    stop_lines_m: [80.0, 200.0]
  platoon:
    size: 4
    penetration_rate: 0.5
train:
  updates_per_epoch: 1
  minibatches: 2
"""


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("GLOSA_SEED", raising=False)


def _make_config(tmp_path: Path) -> Path:
    path = tmp_path / "small.yaml"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path


def _manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


def test_unknown_controller_is_a_usage_error(tmp_path: Path) -> None:
    with pytest.raises(SystemExit) as excinfo:
        main(["simulate", "--controller", "autopilot", "--out", str(tmp_path)])

    assert excinfo.value.code == 2


def test_no_command_prints_help(capsys: pytest.CaptureFixture[str]) -> None:
    assert main([]) == EXIT_OK
    assert "simulate" in capsys.readouterr().out


def test_simulate_is_reproducible(tmp_path: Path) -> None:
    config = _make_config(tmp_path)
    first, second = tmp_path / "a", tmp_path / "b"

    for out in (first, second):
        code = main(["simulate", str(config), "--controller", "necosa", "--seed", "2", "--out", str(out)])
        assert code == EXIT_OK

    assert (first / "trajectory.csv").read_bytes() == (second / "trajectory.csv").read_bytes()
    manifest = _manifest(first)
    assert manifest["status"] == "ok"
    assert manifest["seeds"] == [2]
    assert manifest["controller"] == "necosa"
    assert manifest["config_hash"] == _manifest(second)["config_hash"]
    metrics = pd.read_csv(first / "metrics.csv")
    assert "delta_ec" in set(metrics["metric"])


def test_seed_comes_from_environment(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("GLOSA_SEED", "4")
    out = tmp_path / "out"

    assert main(["simulate", str(_make_config(tmp_path)), "--controller", "purehdv", "--out", str(out)]) == EXIT_OK
    assert _manifest(out)["seeds"] == [4]


def test_missing_config_fails_with_manifest(tmp_path: Path) -> None:
    out = tmp_path / "out"

    code = main(["simulate", str(tmp_path / "absent.yaml"), "--controller", "purehdv", "--out", str(out)])

    assert code == EXIT_USAGE
    manifest = _manifest(out)
    assert manifest["status"] == "failed"
    assert "not found" in manifest["error"]


def test_export_map_round_trips_byte_for_byte(tmp_path: Path) -> None:
    first, second = tmp_path / "parametric", tmp_path / "again"

    assert main(["export-map", "--parametric-defaults", "--out", str(first)]) == EXIT_OK
    assert main(["export-map", "--csv", str(first / "efficiency_map.csv"), "--out", str(second)]) == EXIT_OK

    assert (first / "efficiency_map.csv").read_bytes() == (second / "efficiency_map.csv").read_bytes()


def test_train_with_zero_epochs_writes_initial_checkpoints(tmp_path: Path) -> None:
    out = tmp_path / "out"

    code = main(["train", str(_make_config(tmp_path)), "--mode", "platoon", "--epochs", "0", "--out", str(out)])

    assert code == EXIT_OK
    directory = out / "checkpoints" / "platoon_pr050_n4"
    assert sorted(p.name for p in directory.glob("policy_*.npz"))
    assert (out / "curves" / "platoon_pr050_n4.csv").exists()
    assert _manifest(out)["controller"] == "rl-platoon"


def test_evaluate_writes_long_and_wide_tables(tmp_path: Path) -> None:
    out = tmp_path / "out"

    code = main(
        [
            "evaluate",
            str(_make_config(tmp_path)),
            "--kinds",
            "purehdv",
            "--prs",
            "0",
            "--seeds",
            "0",
            "--modes",
            "regular",
            "--checkpoints",
            str(tmp_path / "ckpt"),
            "--out",
            str(out),
        ]
    )

    assert code == EXIT_OK
    results = pd.read_csv(out / "results.csv")
    assert set(results["kind"]) == {"purehdv"}
    summary = pd.read_csv(out / "summary.csv", keep_default_na=False)
    assert summary.loc[0, "ΔEC"] == "--"
    assert _manifest(out)["status"] == "ok"


@pytest.mark.slow
def test_trained_checkpoints_feed_the_benchmark(tmp_path: Path) -> None:
    config = _make_config(tmp_path)
    out = tmp_path / "out"

    assert main(["train", str(config), "--mode", "platoon", "--pr", "0.5", "--epochs", "2", "--out", str(out)]) == EXIT_OK
    code = main(
        [
            "evaluate",
            str(config),
            "--kinds",
            "rl-platoon",
            "--prs",
            "0.5",
            "--seeds",
            "0",
            "--modes",
            "regular",
            "--checkpoints",
            str(out / "checkpoints"),
            "--out",
            str(tmp_path / "eval"),
        ]
    )

    assert code == EXIT_OK
    results = pd.read_csv(tmp_path / "eval" / "results.csv")
    assert set(results["kind"]) == {"rl-platoon"}
    curve = pd.read_csv(out / "curves" / "platoon_pr050_n4.csv")
    assert set(curve["epoch"]) == {0, 1}
