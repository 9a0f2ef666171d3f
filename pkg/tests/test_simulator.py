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
from platoon_glosa.scenario import GREEN, RED, Limits, PlatoonSpec, ScenarioConfig, build_scenario, corridor_from_switches
from platoon_glosa.simulator import CorridorSimulator, crossing_time

CAV = VehicleKind.CAV
HDV = VehicleKind.HDV


def _make_sim(kinds, states, corridor=None, horizon_s: float = 60.0) -> CorridorSimulator:
    if corridor is None:
        corridor = corridor_from_switches([1000.0], [[(0.0, GREEN)]], horizon_s=horizon_s)
    return CorridorSimulator(
        corridor,
        kinds,
        states,
        tick_s=0.1,
        horizon_s=horizon_s,
        idm=IdmParams(),
        energy=EnergyConfig(),
        limits=Limits(),
    )


def test_crossing_time_interpolates_within_the_tick() -> None:
    assert crossing_time(99.5, 100.5, 100.0, 3.0, 0.1) == pytest.approx(3.05)
    assert crossing_time(100.0, 101.0, 100.0, 3.0, 0.1) is None
    assert crossing_time(99.0, 100.0, 100.0, 3.0, 0.1) == pytest.approx(3.1)


def test_step_advances_clock_and_states() -> None:
    sim = _make_sim([CAV], [VehicleState(x=0.0, v=10.0)])

    outcome = sim.step({0: 0.0})

    assert outcome.tick == 0 and outcome.t == 0.0
    assert sim.tick == 1
    assert sim.t == pytest.approx(0.1)
    assert sim.states[0].x == pytest.approx(1.0)


def test_cav_command_is_clipped_to_the_box() -> None:
    sim = _make_sim([CAV], [VehicleState(x=0.0, v=5.0)])

    outcome = sim.step({0: 10.0})

    assert outcome.accel[0] == pytest.approx(4.0)


def test_cav_without_command_drives_as_human() -> None:
    states = [VehicleState(x=0.0, v=5.0)]
    sim = _make_sim([CAV], states)
    expected = sim.human_acceleration(0)

    outcome = sim.step({})

    assert outcome.accel[0] == pytest.approx(expected)


def test_all_vehicles_update_from_pre_tick_state() -> None:
    sim = _make_sim([HDV, HDV], [VehicleState(x=40.0, v=10.0), VehicleState(x=0.0, v=10.0)])
    follower_accel = sim.human_acceleration(1)

    outcome = sim.step()

    assert outcome.accel[1] == pytest.approx(follower_accel)
    assert outcome.gap_net[1] == pytest.approx(outcome.after[0].x - outcome.after[1].x - 5.0)


def test_overlap_is_clamped_and_reported_once() -> None:
    sim = _make_sim([CAV, CAV], [VehicleState(x=6.0, v=0.0), VehicleState(x=0.0, v=18.0)])

    first = sim.step({0: 0.0, 1: 0.0})
    second = sim.step({0: 0.0, 1: 0.0})

    assert first.overlaps == (1,)
    assert first.gap_net[1] == pytest.approx(-0.8)
    assert sim.states[1].x <= sim.states[0].x - 5.0
    assert sim.states[1].v == 0.0
    assert second.overlaps == ()


def test_red_crossing_is_recorded() -> None:
    corridor = corridor_from_switches([100.0], [[(0.0, RED), (10.0, GREEN)]], horizon_s=60.0)
    sim = _make_sim([CAV], [VehicleState(x=99.5, v=10.0)], corridor=corridor)

    outcome = sim.step({0: 0.0})

    assert len(outcome.crossings) == 1
    event = outcome.crossings[0]
    assert event.time_s == pytest.approx(0.05)
    assert event.red_violation


def test_hdv_stops_for_red_instead_of_crossing() -> None:
    corridor = corridor_from_switches([100.0], [[(0.0, RED), (50.0, GREEN)]], horizon_s=60.0)
    sim = _make_sim([HDV], [VehicleState(x=0.0, v=10.0)], corridor=corridor)

    for _ in range(300):
        outcome = sim.step()
        assert not any(event.red_violation for event in outcome.crossings)
    assert sim.states[0].x < 100.0


@pytest.mark.parametrize("seed", range(5))
def test_human_platoon_never_crosses_on_red(seed: int) -> None:
    config = ScenarioConfig(seed=seed, platoon=PlatoonSpec(penetration_rate=0.0))
    sim = CorridorSimulator.from_scenario(config, build_scenario(config), idm=IdmParams(), energy=EnergyConfig())
    assert all(kind is HDV for kind in sim.kinds)

    crossings = []
    while not sim.done:
        crossings.extend(sim.step().crossings)

    assert crossings
    assert not [event for event in crossings if event.red_violation]


def test_energy_uses_pre_tick_speed() -> None:
    sim = _make_sim([CAV], [VehicleState(x=0.0, v=10.0)])

    outcome = sim.step({0: 1.0})

    assert outcome.ec_j[0] == pytest.approx(EnergyConfig().step(10.0, outcome.accel[0], 0.1))


def test_done_when_everyone_passed_last_line() -> None:
    corridor = corridor_from_switches([10.0], [[(0.0, GREEN)]], horizon_s=60.0)
    sim = _make_sim([CAV], [VehicleState(x=9.5, v=10.0)], corridor=corridor)

    assert not sim.done
    sim.step({0: 0.0})
    assert sim.done


def test_done_at_horizon() -> None:
    sim = _make_sim([CAV], [VehicleState(x=0.0, v=0.0)], horizon_s=20.0)

    while not sim.done:
        sim.step({0: 0.0})

    assert sim.tick == 200


def test_from_scenario_uses_the_scenario_layout() -> None:
    config = ScenarioConfig(horizon_s=30.0)
    instance = build_scenario(config)

    sim = CorridorSimulator.from_scenario(config, instance, idm=IdmParams(), energy=EnergyConfig())

    assert sim.n_vehicles == 10
    assert sim.cav_indices == [1, 3, 5, 7]
    assert sim.n_ticks == 300
