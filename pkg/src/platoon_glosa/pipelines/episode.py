"""Run one corridor episode under a controller and log its trajectory."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..controllers import Controller
from ..data_sources.csv_io import atomic_write_frame
from ..dynamics import IdmParams, VehicleKind
from ..energy import EnergyConfig
from ..errors import ConfigurationError
from ..scenario import CorridorSpec, ScenarioConfig, build_scenario
from ..simulator import CorridorSimulator
from .disturbances import DisturbanceSpec

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    "tick",
    "t",
    "vehicle",
    "kind",
    "x",
    "v",
    "a_effective",
    "ec_j",
    "gap_net",
    "nearest_signal",
    "indication",
    "branch",
)


@dataclass(frozen=True)
class Trajectory:
    """Per-tick, per-vehicle log of an episode.

    Tick 0 holds the initial states. Row ``k >= 1`` holds the state reached by
    the step that started at tick ``k - 1`` together with that step's
    effective acceleration, energy, pre-clamp net gap and filter branch.
    """

    frame: pd.DataFrame
    tick_s: float

    @property
    def n_vehicles(self) -> int:
        return int(self.frame["vehicle"].max()) + 1 if len(self.frame) else 0

    @property
    def kinds(self) -> Tuple[str, ...]:
        first = self.frame[self.frame["tick"] == self.frame["tick"].min()].sort_values("vehicle")
        return tuple(first["kind"])

    @property
    def cav_indices(self) -> List[int]:
        return [i for i, kind in enumerate(self.kinds) if kind == VehicleKind.CAV.value]


@dataclass(frozen=True)
class EpisodeResult:
    trajectory: Trajectory
    corridor: CorridorSpec
    kinds: Tuple[VehicleKind, ...]


def _signal_columns(env: CorridorSimulator, x: float) -> Tuple[int, str]:
    index = env.corridor.next_signal_index(x)
    if index is None:
        return -1, ""
    return index, env.corridor.signals[index].phase_at(env.t).indication


def _rows(env: CorridorSimulator, accel, ec_j, gap_net, branches: Dict[int, str]) -> List[tuple]:
    rows = []
    for i, state in enumerate(env.states):
        nearest, indication = _signal_columns(env, state.x)
        rows.append(
            (
                env.tick,
                env.t,
                i,
                env.kinds[i].value,
                state.x,
                state.v,
                float(accel[i]),
                float(ec_j[i]),
                float(gap_net[i]),
                nearest,
                indication,
                branches.get(i, ""),
            )
        )
    return rows


def run_episode(
    scenario: ScenarioConfig,
    controller: Controller,
    *,
    idm: IdmParams,
    energy: EnergyConfig,
    disturbance: Optional[DisturbanceSpec] = None,
) -> EpisodeResult:
    """Simulate until every vehicle has passed the last stop line or the horizon ends."""

    instance = build_scenario(scenario)
    env = CorridorSimulator.from_scenario(
        scenario,
        instance,
        idm=idm,
        energy=energy,
        disturbance=disturbance if disturbance is not None else scenario.disturbance,
    )
    n = env.n_vehicles
    initial_gap = np.full(n, np.nan)
    for i in range(1, n):
        initial_gap[i] = env.states[i - 1].x - env.states[i].x - env.length_m
    rows = _rows(env, [s.a for s in env.states], np.zeros(n), initial_gap, {})

    while not env.done:
        accels = controller.accelerations(env)
        outcome = env.step(accels)
        rows.extend(_rows(env, outcome.accel, outcome.ec_j, outcome.gap_net, controller.last_branches))

    logger.info("episode finished after %d ticks (%.1f s simulated)", env.tick, env.t)
    frame = pd.DataFrame.from_records(rows, columns=list(TRAJECTORY_COLUMNS))
    return EpisodeResult(
        trajectory=Trajectory(frame=frame, tick_s=scenario.tick_s),
        corridor=env.corridor,
        kinds=env.kinds,
    )


def write_trajectory_csv(trajectory: Trajectory, path: Union[str, Path]) -> Path:
    return atomic_write_frame(trajectory.frame, path)


def read_trajectory_csv(path: Union[str, Path], tick_s: Optional[float] = None) -> Trajectory:
    """Load a trajectory written by :func:`write_trajectory_csv`.

    ``tick_s`` defaults to the spacing of the ``t`` column.
    """

    frame = pd.read_csv(path, keep_default_na=False, na_values={"gap_net": ["nan", "NaN", ""]})
    missing = [c for c in TRAJECTORY_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"{path}: trajectory CSV lacks columns {missing}")
    frame = frame[list(TRAJECTORY_COLUMNS)]
    frame["indication"] = frame["indication"].astype(str)
    frame["branch"] = frame["branch"].astype(str)
    if tick_s is None:
        ticks = np.unique(frame[["tick", "t"]].to_numpy(), axis=0)
        tick_s = float(ticks[1, 1] - ticks[0, 1]) / float(ticks[1, 0] - ticks[0, 0]) if len(ticks) > 1 else 0.1
    return Trajectory(frame=frame, tick_s=tick_s)
