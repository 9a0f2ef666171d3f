"""Disturbances the CAVs are not told about: a sudden brake and a biased red start."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, TYPE_CHECKING

from ..dynamics import VehicleKind
from ..errors import ConfigurationError

if TYPE_CHECKING:
    from ..simulator import CorridorSimulator

EXTREME_BRAKE_DECEL = 4.0
EXTREME_BRAKE_START_S = 20.0
EXTREME_BRAKE_DURATION_S = 3.0
EXTREME_RED_BIAS_S = 2.0


@dataclass(frozen=True)
class LeaderBrake:
    """Force ``vehicle_index`` to decelerate at ``decel`` for a time window."""

    vehicle_index: int
    start_s: float
    duration_s: float
    decel: float = EXTREME_BRAKE_DECEL

    def __post_init__(self) -> None:
        if self.vehicle_index < 0:
            raise ConfigurationError("leader_brake.vehicle_index must be non-negative")
        if self.duration_s <= 0 or self.start_s < 0:
            raise ConfigurationError("leader_brake window must start at t >= 0 and last > 0 s")
        if self.decel <= 0:
            raise ConfigurationError("leader_brake.decel is a positive magnitude")

    def active(self, t: float) -> bool:
        return self.start_s - 1e-9 <= t < self.start_s + self.duration_s - 1e-9


@dataclass(frozen=True)
class DisturbanceSpec:
    leader_brake: Optional[LeaderBrake] = None
    red_start_bias_s: float = 0.0
    brake_enabled: bool = True
    bias_enabled: bool = True

    @property
    def effective_brake(self) -> Optional[LeaderBrake]:
        return self.leader_brake if self.brake_enabled else None

    @property
    def effective_bias_s(self) -> float:
        return self.red_start_bias_s if self.bias_enabled else 0.0


def extreme_preset(kinds: Sequence[VehicleKind]) -> DisturbanceSpec:
    """Brake the predecessor of the first CAV and bias every red start by +2 s.

    Without CAVs the platoon leader brakes, so the reference run sees the same
    kind of shock.
    """

    target = 0
    for i, kind in enumerate(kinds):
        if kind is VehicleKind.CAV and i > 0:
            target = i - 1
            break
    return DisturbanceSpec(
        leader_brake=LeaderBrake(
            vehicle_index=target,
            start_s=EXTREME_BRAKE_START_S,
            duration_s=EXTREME_BRAKE_DURATION_S,
            decel=EXTREME_BRAKE_DECEL,
        ),
        red_start_bias_s=EXTREME_RED_BIAS_S,
    )


def inject_disturbances(env: "CorridorSimulator", spec: Optional[DisturbanceSpec]) -> None:
    """Install ``spec`` on a simulator before its first step.

    The brake overrides the target's acceleration. The bias only changes the
    timing CAVs observe and constrain against; the simulator keeps the true
    timing for phase evolution and red-violation accounting.
    """

    if spec is None:
        env.brake = None
        env.cav_corridor = env.corridor
        return
    brake = spec.effective_brake
    if brake is not None:
        if brake.vehicle_index >= env.n_vehicles:
            raise ConfigurationError(
                f"leader_brake.vehicle_index {brake.vehicle_index} out of range for {env.n_vehicles} vehicles"
            )
        if brake.decel > env.max_brake:
            raise ConfigurationError("leader_brake.decel exceeds the physical deceleration limit")
    env.brake = brake
    env.cav_corridor = env.corridor.with_red_bias(spec.effective_bias_s)
