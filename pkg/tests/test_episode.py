from __future__ import annotations

import math
from pathlib import Path
import sys

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
PROJECT_SRC = PROJECT_ROOT / "src"
if str(PROJECT_SRC) not in sys.path:
    sys.path.insert(0, str(PROJECT_SRC))

from platoon_glosa.controllers import NecosaController, PidParams, PureHdvController
from platoon_glosa.dynamics import IdmParams
from platoon_glosa.energy import EnergyConfig
from platoon_glosa.pipelines.episode import (
    TRAJECTORY_COLUMNS,
    read_trajectory_csv,
    run_episode,
    write_trajectory_csv,
)
from platoon_glosa.pipelines.metrics import METRIC_NAMES, compute_metrics
from platoon_glosa.safety import SafetyContext
from platoon_glosa.scenario import CorridorLayout, Limits, PlatoonSpec, ScenarioConfig, build_scenario


def _make_scenario(**platoon) -> ScenarioConfig:
    return ScenarioConfig(
        horizon_s=40.0,
        seed=3,
        corridor=CorridorLayout(stop_lines_m=(80.0, 200.0)),
        platoon=PlatoonSpec(size=4, penetration_rate=platoon.pop("penetration_rate", 0.5), **platoon),
        limits=Limits(a_min_mag=4.5),
    )


def _run(scenario: ScenarioConfig, controller=None):
    return run_episode(scenario, controller or PureHdvController(), idm=IdmParams(), energy=EnergyConfig())


def test_first_tick_holds_the_initial_states() -> None:
    scenario = _make_scenario()
    instance = build_scenario(scenario)

    frame = _run(scenario).trajectory.frame
    first = frame[frame["tick"] == 0].sort_values("vehicle")

    assert list(frame.columns) == list(TRAJECTORY_COLUMNS)
    np.testing.assert_allclose(first["x"], [s.x for s in instance.states])
    np.testing.assert_allclose(first["v"], [s.v for s in instance.states])
    assert (first["ec_j"] == 0.0).all()
    assert math.isnan(first["gap_net"].iloc[0])
    assert first["gap_net"].iloc[1] == pytest.approx(first["x"].iloc[0] - first["x"].iloc[1] - 5.0)


def test_every_tick_logs_every_vehicle() -> None:
    frame = _run(_make_scenario()).trajectory.frame

    counts = frame.groupby("tick")["vehicle"].count()

    assert (counts == 4).all()
    assert counts.index.max() <= 400


def test_kinds_follow_the_platoon_layout() -> None:
    episode = _run(_make_scenario(cav_assignment=("hdv", "cav", "hdv", "cav")))

    assert episode.trajectory.kinds == ("hdv", "cav", "hdv", "cav")
    assert episode.trajectory.cav_indices == [1, 3]


def test_purehdv_matches_an_all_human_platoon() -> None:
    mixed = _run(_make_scenario(cav_assignment=("hdv", "cav", "hdv", "cav"))).trajectory.frame
    human = _run(_make_scenario(cav_assignment=("hdv",) * 4)).trajectory.frame

    np.testing.assert_allclose(mixed["x"].to_numpy(), human["x"].to_numpy())
    np.testing.assert_allclose(mixed["v"].to_numpy(), human["v"].to_numpy())


def test_same_seed_gives_the_same_trajectory() -> None:
    first = _run(_make_scenario()).trajectory.frame
    second = _run(_make_scenario()).trajectory.frame

    assert first.equals(second)


def test_csv_round_trip_recomputes_the_same_metrics(tmp_path: Path) -> None:
    controller = NecosaController(PidParams(), SafetyContext(a_min_mag=4.5), 250.0)
    episode = _run(_make_scenario(), controller)

    path = write_trajectory_csv(episode.trajectory, tmp_path / "trajectory.csv")
    loaded = read_trajectory_csv(path)

    assert loaded.tick_s == pytest.approx(0.1)
    original = compute_metrics(episode.trajectory, episode.corridor)
    reloaded = compute_metrics(loaded, episode.corridor)
    for name in METRIC_NAMES:
        assert getattr(reloaded, name) == pytest.approx(getattr(original, name), nan_ok=True)
    assert reloaded.dist2tl_present == original.dist2tl_present


def test_written_csv_is_byte_stable(tmp_path: Path) -> None:
    episode = _run(_make_scenario())

    first = write_trajectory_csv(episode.trajectory, tmp_path / "a.csv").read_bytes()
    second = write_trajectory_csv(_run(_make_scenario()).trajectory, tmp_path / "b.csv").read_bytes()

    assert first == second
