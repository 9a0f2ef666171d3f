from __future__ import annotations

from pathlib import Path
import sys

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
PROJECT_SRC = PROJECT_ROOT / "src"
if str(PROJECT_SRC) not in sys.path:
    sys.path.insert(0, str(PROJECT_SRC))

from platoon_glosa.dynamics import IdmParams, VehicleKind, VehicleState
from platoon_glosa.energy import EnergyConfig
from platoon_glosa.errors import ConfigurationError
from platoon_glosa.pipelines.disturbances import DisturbanceSpec, LeaderBrake, extreme_preset, inject_disturbances
from platoon_glosa.scenario import GREEN, RED, Limits, corridor_from_switches
from platoon_glosa.simulator import CorridorSimulator

HDV = VehicleKind.HDV
CAV = VehicleKind.CAV


def _make_sim(disturbance=None, n: int = 2) -> CorridorSimulator:
    corridor = corridor_from_switches([1000.0], [[(0.0, GREEN), (30.0, RED), (40.0, GREEN)]], horizon_s=60.0)
    states = [VehicleState(x=-40.0 * i, v=10.0) for i in range(n)]
    return CorridorSimulator(
        corridor,
        [HDV] + [CAV] * (n - 1),
        states,
        tick_s=0.1,
        horizon_s=60.0,
        idm=IdmParams(),
        energy=EnergyConfig(),
        limits=Limits(),
        disturbance=disturbance,
    )


def test_empty_spec_matches_regular_scenario() -> None:
    sim = _make_sim(DisturbanceSpec())

    assert sim.brake is None
    assert sim.cav_corridor is sim.corridor


def test_red_bias_only_changes_cav_view() -> None:
    sim = _make_sim(DisturbanceSpec(red_start_bias_s=2.0))

    believed = sim.cav_corridor.signals[0].phase_at(5.0)
    truth = sim.corridor.signals[0].phase_at(5.0)

    assert believed.next_red_start_s == pytest.approx(truth.next_red_start_s + 2.0)
    assert truth.next_red_start_s == 30.0


def test_disabled_bias_is_ignored() -> None:
    sim = _make_sim(DisturbanceSpec(red_start_bias_s=2.0, bias_enabled=False))

    assert sim.cav_corridor.signals[0].switches == sim.corridor.signals[0].switches


def test_brake_window_forces_deceleration() -> None:
    sim = _make_sim(DisturbanceSpec(leader_brake=LeaderBrake(vehicle_index=0, start_s=10.0, duration_s=1.0)))

    braking = {}
    while sim.tick < 120:
        outcome = sim.step({})
        braking[outcome.tick] = outcome.accel[0]

    for tick in range(100, 110):
        assert braking[tick] == pytest.approx(-4.0)
    assert braking[99] > 0.0
    assert braking[110] > 0.0


def test_extreme_preset_brakes_predecessor_of_first_cav() -> None:
    spec = extreme_preset([HDV, HDV, CAV, HDV])

    assert spec.leader_brake.vehicle_index == 1
    assert spec.leader_brake.decel == 4.0
    assert spec.red_start_bias_s == 2.0


def test_extreme_preset_without_cavs_brakes_the_leader() -> None:
    assert extreme_preset([HDV, HDV]).leader_brake.vehicle_index == 0


def test_brake_target_must_exist() -> None:
    with pytest.raises(ConfigurationError):
        _make_sim(DisturbanceSpec(leader_brake=LeaderBrake(vehicle_index=5, start_s=1.0, duration_s=1.0)))


def test_brake_beyond_physical_limit_is_rejected() -> None:
    sim = _make_sim()

    with pytest.raises(ConfigurationError):
        inject_disturbances(sim, DisturbanceSpec(leader_brake=LeaderBrake(0, 1.0, 1.0, decel=6.0)))


def test_leader_brake_validation() -> None:
    with pytest.raises(ConfigurationError):
        LeaderBrake(vehicle_index=0, start_s=1.0, duration_s=0.0)
    with pytest.raises(ConfigurationError):
        LeaderBrake(vehicle_index=-1, start_s=1.0, duration_s=1.0)
