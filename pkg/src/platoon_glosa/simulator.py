"""Tick-based single-lane corridor simulation of a mixed platoon."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (
    IdmParams,
    VehicleKind,
    VehicleState,
    effective_leader,
    idm_acceleration,
    step_vehicle,
)
from .energy import EnergyConfig
from .pipelines.disturbances import DisturbanceSpec, LeaderBrake, inject_disturbances
from .safety import FallbackTracker
from .scenario import RED, CorridorSpec, Limits, ScenarioConfig, ScenarioInstance

logger = logging.getLogger(__name__)

COLLISION_CLEARANCE_M = 0.1


@dataclass(frozen=True)
class CrossingEvent:
    vehicle: int
    signal: int
    time_s: float
    indication: str

    @property
    def red_violation(self) -> bool:
        return self.indication == RED


@dataclass(frozen=True)
class StepOutcome:
    """Everything that happened during one tick, indexed by vehicle."""

    tick: int
    t: float
    before: Tuple[VehicleState, ...]
    after: Tuple[VehicleState, ...]
    accel: np.ndarray
    ec_j: np.ndarray
    gap_net: np.ndarray
    overlaps: Tuple[int, ...] = ()
    crossings: Tuple[CrossingEvent, ...] = ()


def crossing_time(x_before: float, x_after: float, line: float, t: float, dt: float) -> Optional[float]:
    """Interpolated instant the front bumper reaches ``line`` within the tick."""

    if not (x_before < line <= x_after):
        return None
    travelled = x_after - x_before
    return t + dt * (line - x_before) / travelled


class CorridorSimulator:
    """Advances every vehicle one tick at a time.

    HDVs follow the IDM with the phantom stop-line rule; CAV accelerations are
    supplied by controllers each tick. All vehicles update simultaneously from
    the pre-tick state.
    """

    def __init__(
        self,
        corridor: CorridorSpec,
        kinds: Sequence[VehicleKind],
        states: Sequence[VehicleState],
        *,
        tick_s: float,
        horizon_s: float,
        idm: IdmParams,
        energy: EnergyConfig,
        limits: Limits,
        length_m: float = 5.0,
        disturbance: Optional[DisturbanceSpec] = None,
    ) -> None:
        if len(kinds) != len(states):
            raise ValueError("one kind per vehicle state")
        self.corridor = corridor
        self.kinds: Tuple[VehicleKind, ...] = tuple(kinds)
        self.states: List[VehicleState] = list(states)
        self.tick_s = tick_s
        self.n_ticks = int(round(horizon_s / tick_s))
        self.idm = idm
        self.energy = energy
        self.limits = limits
        self.length_m = length_m
        self.tick = 0
        self.brake: Optional[LeaderBrake] = None
        self.cav_corridor: CorridorSpec = corridor
        self._overlapping = np.zeros(len(states), dtype=bool)
        self.fallbacks = FallbackTracker()
        inject_disturbances(self, disturbance)

    @classmethod
    def from_scenario(
        cls,
        config: ScenarioConfig,
        instance: ScenarioInstance,
        *,
        idm: IdmParams,
        energy: EnergyConfig,
        disturbance: Optional[DisturbanceSpec] = None,
    ) -> "CorridorSimulator":
        return cls(
            instance.corridor,
            instance.kinds,
            instance.states,
            tick_s=config.tick_s,
            horizon_s=config.horizon_s,
            idm=idm,
            energy=energy,
            limits=config.limits,
            length_m=config.vehicle_length_m,
            disturbance=disturbance,
        )

    @property
    def n_vehicles(self) -> int:
        return len(self.states)

    @property
    def t(self) -> float:
        return self.tick * self.tick_s

    @property
    def max_brake(self) -> float:
        return max(self.idm.b0, self.limits.a_min_mag)

    @property
    def cav_indices(self) -> List[int]:
        return [i for i, kind in enumerate(self.kinds) if kind is VehicleKind.CAV]

    def passed_last_line(self, i: int) -> bool:
        return self.states[i].x >= self.corridor.last_stop_line_m

    @property
    def done(self) -> bool:
        if self.tick >= self.n_ticks:
            return True
        return all(self.passed_last_line(i) for i in range(self.n_vehicles))

    def predecessor(self, i: int) -> Optional[VehicleState]:
        return self.states[i - 1] if i > 0 else None

    def follower(self, i: int) -> Optional[VehicleState]:
        return self.states[i + 1] if i + 1 < self.n_vehicles else None

    def human_acceleration(self, i: int) -> float:
        """IDM acceleration vehicle ``i`` would apply as a human driver."""

        view = effective_leader(
            i,
            self.states,
            self.kinds,
            self.corridor,
            self.t,
            length=self.length_m,
            params=self.idm,
            human_driven=True,
        )
        return idm_acceleration(self.states[i], view.state, view.gap_net, self.idm)

    def step(self, cav_accels: Optional[Mapping[int, float]] = None) -> StepOutcome:
        """Advance one tick. CAVs missing from ``cav_accels`` drive as humans."""

        cav_accels = cav_accels or {}
        t = self.t
        dt = self.tick_s
        before = tuple(self.states)
        n = self.n_vehicles

        commanded = np.empty(n)
        for i, kind in enumerate(self.kinds):
            if kind is VehicleKind.CAV and i in cav_accels:
                a = float(cav_accels[i])
                commanded[i] = min(self.limits.a_max, max(-self.limits.a_min_mag, a))
            else:
                commanded[i] = self.human_acceleration(i)
        if self.brake is not None and self.brake.active(t):
            commanded[self.brake.vehicle_index] = -self.brake.decel

        after = [step_vehicle(state, float(a), dt, self.limits.v_max) for state, a in zip(before, commanded)]

        gap_net = np.full(n, np.nan)
        overlaps: List[int] = []
        for i in range(1, n):
            gap = after[i - 1].x - after[i].x - self.length_m
            gap_net[i] = gap
            if gap < 0.0:
                if not self._overlapping[i]:
                    overlaps.append(i)
                    logger.warning("vehicle %d overlaps its predecessor at t=%.2f s (gap %.3f m)", i, t, gap)
                self._overlapping[i] = True
                leader = after[i - 1]
                clamped_x = leader.x - self.length_m - COLLISION_CLEARANCE_M
                clamped_v = min(after[i].v, leader.v)
                after[i] = VehicleState(x=clamped_x, v=clamped_v, a=(clamped_v - before[i].v) / dt)
            else:
                self._overlapping[i] = False

        crossings: List[CrossingEvent] = []
        for i in range(n):
            for k, signal in enumerate(self.corridor.signals):
                when = crossing_time(before[i].x, after[i].x, signal.position_m, t, dt)
                if when is not None:
                    indication = signal.phase_at(when).indication
                    crossings.append(CrossingEvent(vehicle=i, signal=k, time_s=when, indication=indication))

        accel = np.array([state.a for state in after])
        ec_j = np.array([self.energy.step(b.v, a, dt) for b, a in zip(before, accel)])

        self.states = after
        self.tick += 1
        return StepOutcome(
            tick=self.tick - 1,
            t=t,
            before=before,
            after=tuple(after),
            accel=accel,
            ec_j=ec_j,
            gap_net=gap_net,
            overlaps=tuple(overlaps),
            crossings=tuple(crossings),
        )
