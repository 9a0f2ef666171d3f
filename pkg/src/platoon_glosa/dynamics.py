"""Vehicle kinematics, the IDM human-driver law and leader resolution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, TYPE_CHECKING

from .errors import CollisionStateError, ConfigurationError

if TYPE_CHECKING:
    from .scenario import CorridorSpec


class VehicleKind(str, Enum):
    CAV = "cav"
    HDV = "hdv"


@dataclass(frozen=True)
class VehicleState:
    """Position (m), speed (m/s) and last applied acceleration (m/s^2)."""

    x: float
    v: float
    a: float = 0.0


@dataclass(frozen=True)
class IdmParams:
    """IDM parameter set shared by every human driver."""

    a0: float = 1.3
    b0: float = 4.5
    v_max: float = 18.0
    s0: float = 2.0
    T_headway: float = 1.8
    delta0: float = 4.0
    amber_anticipation: bool = True
    amber_window_s: float = 4.0

    def __post_init__(self) -> None:
        for name in ("a0", "b0", "v_max", "s0", "T_headway", "delta0"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"IdmParams.{name} must be strictly positive")
        if self.delta0 < 1:
            raise ConfigurationError("IdmParams.delta0 must be >= 1")


@dataclass(frozen=True)
class LeaderView:
    """The vehicle an ego car-follows, possibly a phantom at a red stop line."""

    state: Optional[VehicleState]
    gap_net: Optional[float]
    phantom: bool = False


def desired_gap(v: float, dv: float, params: IdmParams) -> float:
    """IDM desired dynamic gap s*(v, dv)."""

    interaction = params.T_headway * v + v * dv / (2.0 * math.sqrt(params.a0 * params.b0))
    return params.s0 + max(0.0, interaction)


def equilibrium_gap(v: float, params: IdmParams) -> float:
    """Net gap at which a follower cruising at v behind an equal-speed leader has zero acceleration."""

    free = 1.0 - (v / params.v_max) ** params.delta0
    if free <= 0.0:
        raise ConfigurationError("no finite equilibrium gap at or above the desired speed")
    return desired_gap(v, 0.0, params) / math.sqrt(free)


def idm_acceleration(
    ego: VehicleState,
    leader: Optional[VehicleState],
    gap_net: Optional[float],
    params: IdmParams,
) -> float:
    free_term = (max(ego.v, 0.0) / params.v_max) ** params.delta0
    if leader is None:
        accel = params.a0 * (1.0 - free_term)
    else:
        if gap_net is None or gap_net <= 0.0:
            raise CollisionStateError(f"net gap must be positive, got {gap_net}")
        s_star = desired_gap(ego.v, ego.v - leader.v, params)
        accel = params.a0 * (1.0 - free_term - (s_star / gap_net) ** 2)
    return min(params.a0, max(-params.b0, accel))


def step_vehicle(state: VehicleState, a: float, dt: float, v_max: float) -> VehicleState:
    """Semi-implicit Euler step with speed clamped to [0, v_max]."""

    if dt <= 0:
        raise ConfigurationError("tick must be positive")
    v_next = min(v_max, max(0.0, state.v + a * dt))
    return VehicleState(x=state.x + v_next * dt, v=v_next, a=(v_next - state.v) / dt)


def net_gap(leader: VehicleState, ego: VehicleState, length: float) -> float:
    return leader.x - ego.x - length


def effective_leader(
    vehicle_index: int,
    states: Sequence[VehicleState],
    kinds: Sequence[VehicleKind],
    corridor: "CorridorSpec",
    t: float,
    *,
    length: float,
    params: IdmParams,
    human_driven: bool = False,
) -> LeaderView:
    """Resolve whom vehicle ``vehicle_index`` car-follows at time ``t``.

    HDVs upstream of a red stop line see a stopped phantom vehicle at the line;
    the nearer of phantom and physical predecessor wins. CAVs always get their
    physical predecessor unless ``human_driven`` asks for HDV behavior.
    """

    ego = states[vehicle_index]
    physical: Optional[VehicleState] = states[vehicle_index - 1] if vehicle_index > 0 else None
    physical_gap = net_gap(physical, ego, length) if physical is not None else None
    view = LeaderView(state=physical, gap_net=physical_gap)

    if kinds[vehicle_index] is not VehicleKind.HDV and not human_driven:
        return view

    signal = corridor.next_signal(ego.x)
    if signal is None:
        return view

    phase = signal.phase_at(t)
    distance = signal.position_m - ego.x
    stops = phase.indication == "red"
    if not stops and params.amber_anticipation:
        stops = _stops_on_amber(ego.v, distance, phase.remaining_s, params)
    if not stops:
        return view

    if physical_gap is not None and physical_gap <= distance:
        return view
    phantom = VehicleState(x=signal.position_m, v=0.0, a=0.0)
    return LeaderView(state=phantom, gap_net=distance, phantom=True)


def _stops_on_amber(v: float, distance: float, green_left: float, params: IdmParams) -> bool:
    # Within the amber window a driver that would not clear the line before red
    # stops if it can do so at three quarters of the maximum deceleration.
    if green_left > params.amber_window_s or distance <= 0.0:
        return False
    if distance <= v * green_left:
        return False
    return distance >= v * v / (1.5 * params.b0) + params.s0
