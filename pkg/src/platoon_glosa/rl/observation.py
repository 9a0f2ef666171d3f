"""Local observations for CAV actors and the global state for critics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ..errors import ConfigurationError
from ..scenario import GREEN, CorridorSpec

if TYPE_CHECKING:
    from ..simulator import CorridorSimulator

OBSERVATION_SIZE = 8


@dataclass(frozen=True)
class ObservationScales:
    gap_m: float = 100.0
    distance_m: float = 250.0
    remaining_s: float = 12.0
    sensing_range_m: float = 100.0

    def __post_init__(self) -> None:
        if min(self.gap_m, self.distance_m, self.remaining_s, self.sensing_range_m) <= 0:
            raise ConfigurationError("observation scales must be positive")


@dataclass(frozen=True)
class Observation:
    """What one CAV measures, in physical units."""

    gap_prev_m: float
    gap_follow_m: float
    v: float
    v_prev: float
    v_follow: float
    distance_to_signal_m: float
    green: float
    remaining_s: float

    def vector(self, scales: ObservationScales, v_max: float) -> np.ndarray:
        raw = np.array(
            [
                self.gap_prev_m / scales.gap_m,
                self.gap_follow_m / scales.gap_m,
                self.v / v_max,
                self.v_prev / v_max,
                self.v_follow / v_max,
                self.distance_to_signal_m / scales.distance_m,
                self.green,
                self.remaining_s / scales.remaining_s,
            ]
        )
        return np.clip(raw, -1.0, 1.0)


def _visible_signal(corridor: CorridorSpec, x: float, range_m: float):
    signal = corridor.next_signal(x)
    if signal is None or signal.position_m - x > range_m:
        return None
    return signal


def observe(env: "CorridorSimulator", cav_index: int, *, scales: ObservationScales, communication_range_m: float) -> Observation:
    """Neighbor and signal readings for ``cav_index`` from the CAV-visible timing.

    A missing neighbor reads as a gap equal to the sensing range moving at
    the ego speed. No signal in range reads as green at the range limit.
    """

    ego = env.states[cav_index]
    prev = env.predecessor(cav_index)
    follow = env.follower(cav_index)
    sentinel = scales.sensing_range_m
    length = env.length_m

    gap_prev = prev.x - ego.x - length if prev is not None else sentinel
    gap_follow = ego.x - follow.x - length if follow is not None else sentinel

    signal = _visible_signal(env.cav_corridor, ego.x, communication_range_m)
    if signal is None:
        distance, green, remaining = communication_range_m, 1.0, 0.0
    else:
        view = signal.phase_at(env.t)
        distance = signal.position_m - ego.x
        green = 1.0 if view.indication == GREEN else 0.0
        remaining = view.remaining_s

    return Observation(
        gap_prev_m=gap_prev,
        gap_follow_m=gap_follow,
        v=ego.v,
        v_prev=prev.v if prev is not None else ego.v,
        v_follow=follow.v if follow is not None else ego.v,
        distance_to_signal_m=distance,
        green=green,
        remaining_s=remaining,
    )


def global_state_size(n_vehicles: int, n_cavs: int, n_signals: int) -> int:
    return 2 * n_vehicles + n_cavs + 2 * n_signals


def global_state(env: "CorridorSimulator", *, scales: ObservationScales) -> np.ndarray:
    """Privileged critic input built from ground truth."""

    v_max = env.limits.v_max
    parts = []
    for i, state in enumerate(env.states):
        prev = env.predecessor(i)
        gap = prev.x - state.x - env.length_m if prev is not None else scales.sensing_range_m
        parts.extend([state.v / v_max, gap / scales.gap_m])
    for i in env.cav_indices:
        signal = env.corridor.next_signal(env.states[i].x)
        distance = signal.position_m - env.states[i].x if signal is not None else scales.distance_m
        parts.append(distance / scales.distance_m)
    for signal in env.corridor.signals:
        view = signal.phase_at(env.t)
        parts.extend([1.0 if view.indication == GREEN else 0.0, view.remaining_s / scales.remaining_s])
    return np.clip(np.asarray(parts, dtype=float), -1.0, 1.0)
