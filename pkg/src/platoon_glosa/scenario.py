"""Corridor geometry, signal timing generation and platoon initialization."""

from __future__ import annotations

import math
import zlib
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union, TYPE_CHECKING

import numpy as np

from .dynamics import VehicleKind, VehicleState
from .errors import ConfigurationError

if TYPE_CHECKING:
    from .pipelines.disturbances import DisturbanceSpec

GREEN = "green"
RED = "red"
_INDICATIONS = (GREEN, RED)
_EPS = 1e-9

Switch = Tuple[float, str]


def _other(indication: str) -> str:
    return RED if indication == GREEN else GREEN


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one consumer of the root seed.

    Streams are keyed by a fixed label so adding draws to one consumer never
    shifts the numbers another consumer sees.
    """

    if seed < 0:
        raise ConfigurationError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode("utf-8"))]))


@dataclass(frozen=True)
class PhaseView:
    indication: str
    remaining_s: float
    next_green_start_s: float
    next_red_start_s: float
    upcoming_green_start_s: float = math.inf
    upcoming_green_end_s: float = math.inf


@dataclass(frozen=True)
class SignalTiming:
    """One stop line and its alternating green/red switch sequence."""

    position_m: float
    switches: Tuple[Switch, ...]
    horizon_s: float

    def __post_init__(self) -> None:
        if not self.switches:
            raise ConfigurationError("a signal needs at least one phase")
        previous_time: Optional[float] = None
        previous_indication: Optional[str] = None
        for time_s, indication in self.switches:
            if indication not in _INDICATIONS:
                raise ConfigurationError(f"unknown indication {indication!r}")
            if previous_time is not None and time_s <= previous_time:
                raise ConfigurationError("switch times must be strictly increasing")
            if previous_indication is not None and indication == previous_indication:
                raise ConfigurationError("indications must alternate")
            previous_time, previous_indication = time_s, indication

    @property
    def switch_times(self) -> List[float]:
        return [time_s for time_s, _ in self.switches]

    def phase_at(self, t: float) -> PhaseView:
        """Phase containing ``t``; a switch instant belongs to the new phase."""

        times = self.switch_times
        idx = bisect_right(times, t + _EPS) - 1
        if idx < 0:
            idx = 0
        start, indication = self.switches[idx]

        def switch_time(offset: int) -> float:
            j = idx + offset
            return times[j] if j < len(times) else math.inf

        next_switch = switch_time(1)
        if math.isinf(next_switch):
            # past the last listed switch the final phase runs to the horizon
            remaining = max(self.horizon_s - t, 0.0)
        else:
            remaining = next_switch - t

        if indication == GREEN:
            next_green, next_red = start, next_switch
            upcoming_start, upcoming_end = switch_time(2), switch_time(3)
        else:
            next_green, next_red = next_switch, start
            upcoming_start, upcoming_end = next_switch, switch_time(2)
        return PhaseView(
            indication=indication,
            remaining_s=remaining,
            next_green_start_s=next_green,
            next_red_start_s=next_red,
            upcoming_green_start_s=upcoming_start,
            upcoming_green_end_s=upcoming_end,
        )

    def with_red_bias(self, bias_s: float) -> "SignalTiming":
        """Copy whose red phases are believed to start ``bias_s`` later."""

        if bias_s == 0.0:
            return self
        shifted: List[Switch] = []
        for i, (time_s, indication) in enumerate(self.switches):
            if indication == RED and i > 0:
                nxt = self.switches[i + 1][0] if i + 1 < len(self.switches) else math.inf
                if time_s + bias_s >= nxt:
                    raise ConfigurationError("red-start bias swallows a whole red phase")
                time_s = time_s + bias_s
            shifted.append((time_s, indication))
        return replace(self, switches=tuple(shifted))


@dataclass(frozen=True)
class CorridorSpec:
    signals: Tuple[SignalTiming, ...]
    offset_s: float = 15.0

    def __post_init__(self) -> None:
        if not self.signals:
            raise ConfigurationError("corridor needs at least one signal")
        positions = [s.position_m for s in self.signals]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ConfigurationError("signal positions must be strictly increasing")

    @property
    def last_stop_line_m(self) -> float:
        return self.signals[-1].position_m

    def next_signal_index(self, x: float) -> Optional[int]:
        for k, signal in enumerate(self.signals):
            if signal.position_m > x:
                return k
        return None

    def next_signal(self, x: float) -> Optional[SignalTiming]:
        """First stop line strictly downstream of ``x``; ``None`` past the last."""

        k = self.next_signal_index(x)
        return None if k is None else self.signals[k]

    def with_red_bias(self, bias_s: float) -> "CorridorSpec":
        if bias_s == 0.0:
            return self
        return replace(self, signals=tuple(s.with_red_bias(bias_s) for s in self.signals))


@dataclass(frozen=True)
class CorridorLayout:
    """Stop-line geometry and the timing distributions signals are drawn from."""

    stop_lines_m: Tuple[float, ...] = (200.0, 450.0, 650.0, 900.0)
    red_bounds_s: Tuple[float, float] = (5.0, 10.0)
    green_bounds_s: Tuple[float, float] = (10.0, 12.0)
    offset_s: float = 15.0
    first_indication: str = GREEN

    def __post_init__(self) -> None:
        if not self.stop_lines_m:
            raise ConfigurationError("corridor.stop_lines_m must not be empty")
        for name in ("red_bounds_s", "green_bounds_s"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigurationError(f"corridor.{name} must satisfy 0 < low <= high")
        if self.offset_s < 0:
            raise ConfigurationError("corridor.offset_s must be non-negative")
        if self.first_indication not in _INDICATIONS:
            raise ConfigurationError("corridor.first_indication must be 'green' or 'red'")


@dataclass(frozen=True)
class PlatoonSpec:
    size: int = 10
    penetration_rate: float = 0.4
    spacing_dist: Tuple[float, float] = (30.0, 5.0)
    speed_dist: Tuple[float, float] = (13.0, 3.0)
    cav_assignment: Union[str, Tuple[str, ...]] = "sampled"
    leader_is_cav: bool = False

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ConfigurationError("platoon.size must be at least 2")
        if not 0.0 <= self.penetration_rate <= 1.0:
            raise ConfigurationError("platoon.penetration_rate must lie in [0, 1]")
        if self.spacing_dist[1] < 0 or self.speed_dist[1] < 0:
            raise ConfigurationError("platoon distributions need non-negative std")
        if self.cav_assignment != "sampled":
            kinds = tuple(self.cav_assignment)
            if len(kinds) != self.size:
                raise ConfigurationError("platoon.cav_assignment must list one kind per vehicle")
            for kind in kinds:
                VehicleKind(kind)


@dataclass(frozen=True)
class Limits:
    v_max: float = 18.0
    a_max: float = 4.0
    a_min_mag: float = 4.0

    def __post_init__(self) -> None:
        if not (self.v_max > 0 and self.a_max > 0 and self.a_min_mag > 0):
            raise ConfigurationError("limits must be strictly positive")


@dataclass(frozen=True)
class ScenarioConfig:
    tick_s: float = 0.1
    horizon_s: float = 180.0
    seed: int = 0
    corridor: CorridorLayout = field(default_factory=CorridorLayout)
    platoon: PlatoonSpec = field(default_factory=PlatoonSpec)
    disturbance: Optional["DisturbanceSpec"] = None
    limits: Limits = field(default_factory=Limits)
    vehicle_length_m: float = 5.0
    min_gap_m: float = 2.0
    communication_range_m: float = 250.0

    def __post_init__(self) -> None:
        if self.tick_s <= 0:
            raise ConfigurationError("scenario.tick_s must be positive")
        ticks = self.horizon_s / self.tick_s
        if self.horizon_s <= 0 or abs(ticks - round(ticks)) > 1e-6:
            raise ConfigurationError("scenario.horizon_s must be a positive multiple of tick_s")
        if self.seed < 0:
            raise ConfigurationError("scenario.seed must be non-negative")
        if self.vehicle_length_m <= 0 or self.min_gap_m <= 0:
            raise ConfigurationError("vehicle length and minimum gap must be positive")
        if self.communication_range_m <= 0:
            raise ConfigurationError("scenario.communication_range_m must be positive")

    @property
    def n_ticks(self) -> int:
        return int(round(self.horizon_s / self.tick_s))


def _draw_ticks(rng: np.random.Generator, bounds: Tuple[float, float], tick: float) -> int:
    lo, hi = bounds
    lo_ticks = int(math.ceil(lo / tick - _EPS))
    hi_ticks = int(math.floor(hi / tick + _EPS))
    if lo_ticks > hi_ticks:
        raise ConfigurationError(f"bounds {bounds} contain no multiple of the tick {tick}")
    drawn = int(round(rng.uniform(lo, hi) / tick))
    return min(hi_ticks, max(lo_ticks, drawn))


def _signal_switches(
    layout: CorridorLayout,
    start_ticks: int,
    horizon_ticks: int,
    tick: float,
    rng: np.random.Generator,
) -> Tuple[Switch, ...]:
    bounds = {RED: layout.red_bounds_s, GREEN: layout.green_bounds_s}
    cycle_ticks = int(math.ceil((layout.red_bounds_s[1] + layout.green_bounds_s[1]) / tick))
    end_ticks = horizon_ticks + 2 * cycle_ticks

    forward: List[Tuple[int, str]] = []
    cursor, indication = start_ticks, layout.first_indication
    while cursor <= end_ticks:
        forward.append((cursor, indication))
        cursor += _draw_ticks(rng, bounds[indication], tick)
        indication = _other(indication)

    backward: List[Tuple[int, str]] = []
    cursor, indication = start_ticks, layout.first_indication
    while cursor > 0:
        indication = _other(indication)
        cursor -= _draw_ticks(rng, bounds[indication], tick)
        backward.append((cursor, indication))

    phases = list(reversed(backward)) + forward
    kept: List[Tuple[int, str]] = []
    for i, (start, ind) in enumerate(phases):
        following = phases[i + 1][0] if i + 1 < len(phases) else None
        if following is not None and following <= 0:
            continue
        kept.append((max(start, 0), ind))
    return tuple((round(n * tick, 9), ind) for n, ind in kept)


def generate_corridor(config: ScenarioConfig, rng: np.random.Generator) -> CorridorSpec:
    """Draw the concrete switch sequences for every stop line of the layout."""

    layout = config.corridor
    if config.horizon_s < layout.red_bounds_s[1] + layout.green_bounds_s[1]:
        raise ConfigurationError("horizon is too short to contain one full signal cycle")
    positions = tuple(float(p) for p in layout.stop_lines_m)
    if any(b <= a for a, b in zip(positions, positions[1:])):
        raise ConfigurationError("corridor.stop_lines_m must be strictly increasing")

    tick = config.tick_s
    horizon_ticks = config.n_ticks
    signals = []
    for k, position in enumerate(positions):
        start_ticks = int(round(k * layout.offset_s / tick))
        switches = _signal_switches(layout, start_ticks, horizon_ticks, tick, rng)
        signals.append(SignalTiming(position_m=position, switches=switches, horizon_s=config.horizon_s))
    return CorridorSpec(signals=tuple(signals), offset_s=layout.offset_s)


def cav_indices(size: int, penetration_rate: float, *, leader_is_cav: bool = False) -> List[int]:
    n_cav = int(math.floor(penetration_rate * size + 0.5))
    if n_cav <= 0:
        return []
    if n_cav >= size:
        return list(range(size))
    if leader_is_cav:
        return [int(j * size // n_cav) for j in range(n_cav)]
    return [1 + int(j * (size - 1) // n_cav) for j in range(n_cav)]


def initialize_platoon(
    spec: PlatoonSpec,
    rng: np.random.Generator,
    *,
    v_max: float = 18.0,
    min_spacing_m: float = 7.0,
) -> List[Tuple[VehicleKind, VehicleState]]:
    """Leader at x=0, followers upstream at sampled spacings and speeds."""

    if spec.cav_assignment == "sampled":
        cavs = set(cav_indices(spec.size, spec.penetration_rate, leader_is_cav=spec.leader_is_cav))
        kinds = [VehicleKind.CAV if i in cavs else VehicleKind.HDV for i in range(spec.size)]
    else:
        kinds = [VehicleKind(k) for k in spec.cav_assignment]

    spacing_mean, spacing_std = spec.spacing_dist
    speed_mean, speed_std = spec.speed_dist
    vehicles: List[Tuple[VehicleKind, VehicleState]] = []
    x = 0.0
    for i in range(spec.size):
        if i > 0:
            spacing = rng.normal(spacing_mean, spacing_std)
            attempts = 1
            while spacing < min_spacing_m and attempts < 100:
                spacing = rng.normal(spacing_mean, spacing_std)
                attempts += 1
            x -= max(float(spacing), min_spacing_m)
        v = float(np.clip(rng.normal(speed_mean, speed_std), 0.0, v_max))
        vehicles.append((kinds[i], VehicleState(x=x, v=v, a=0.0)))
    return vehicles


@dataclass(frozen=True)
class ScenarioInstance:
    corridor: CorridorSpec
    kinds: Tuple[VehicleKind, ...]
    states: Tuple[VehicleState, ...]


def build_scenario(config: ScenarioConfig) -> ScenarioInstance:
    corridor = generate_corridor(config, rng_stream(config.seed, "timing"))
    platoon = initialize_platoon(
        config.platoon,
        rng_stream(config.seed, "platoon"),
        v_max=config.limits.v_max,
        min_spacing_m=config.min_gap_m + config.vehicle_length_m,
    )
    return ScenarioInstance(
        corridor=corridor,
        kinds=tuple(kind for kind, _ in platoon),
        states=tuple(state for _, state in platoon),
    )


def corridor_from_switches(
    positions: Sequence[float],
    switches: Sequence[Sequence[Switch]],
    horizon_s: float,
    offset_s: float = 0.0,
) -> CorridorSpec:
    """Hand-built corridor, mostly for toy scenarios."""

    signals = tuple(
        SignalTiming(position_m=float(p), switches=tuple((float(t), ind) for t, ind in sw), horizon_s=horizon_s)
        for p, sw in zip(positions, switches)
    )
    return CorridorSpec(signals=signals, offset_s=offset_s)
