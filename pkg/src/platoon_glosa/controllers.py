"""Benchmark controllers that map the simulator state to CAV accelerations.

* ``purehdv``: CAVs drive exactly like humans (IDM with the phantom rule).
* ``necosa``: PID tracking of a green-window target speed, then the safety filter.
* ``rl-softsafe``: policy action clipped to the box only.
* ``rl-ce``: policy action clamped to a one-step feasible speed region.
* ``rl-selfish`` / ``rl-platoon``: policy action through the safety filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .rl.networks import PolicyNet
from .rl.observation import ObservationScales, observe
from .safety import SafeFilterResult, SafetyContext, filter_action
from .scenario import GREEN
from .simulator import CorridorSimulator


class ControllerKind(str, Enum):
    PUREHDV = "purehdv"
    NECOSA = "necosa"
    RL_SOFTSAFE = "rl-softsafe"
    RL_CE = "rl-ce"
    RL_SELFISH = "rl-selfish"
    RL_PLATOON = "rl-platoon"

    @property
    def is_rl(self) -> bool:
        return self.value.startswith("rl-")

    @property
    def rl_mode(self) -> str:
        return _RL_MODES[self]

    @property
    def train_mode(self) -> str:
        return self.value[len("rl-") :]

    @classmethod
    def from_train_mode(cls, mode: str) -> "ControllerKind":
        try:
            return cls(f"rl-{mode}")
        except ValueError as exc:
            raise ConfigurationError(f"unknown training mode {mode!r}") from exc


_RL_MODES = {
    ControllerKind.RL_SOFTSAFE: "soft",
    ControllerKind.RL_CE: "ce",
    ControllerKind.RL_SELFISH: "selfish",
    ControllerKind.RL_PLATOON: "platoon",
}
RL_MODES = tuple(_RL_MODES.values())


@dataclass(frozen=True)
class PidParams:
    kp: float = 0.8
    ki: float = 0.05
    kd: float = 0.1
    integral_clamp: float = 5.0

    def __post_init__(self) -> None:
        if min(self.kp, self.ki, self.kd) < 0 or self.integral_clamp <= 0:
            raise ConfigurationError("PID gains must be non-negative and the integral clamp positive")


@dataclass
class PidState:
    integral: float = 0.0
    previous_error: Optional[float] = None

    def update(self, error: float, dt: float, params: PidParams) -> float:
        self.integral = min(params.integral_clamp, max(-params.integral_clamp, self.integral + error * dt))
        derivative = 0.0 if self.previous_error is None else (error - self.previous_error) / dt
        self.previous_error = error
        return params.kp * error + params.ki * self.integral + params.kd * derivative


@dataclass(frozen=True)
class ShieldedAction:
    a: float
    factor: float
    result: Optional[SafeFilterResult] = None
    degenerate: bool = False

    @property
    def branch(self) -> str:
        return self.result.branch if self.result is not None else ""


def purehdv(env: CorridorSimulator, i: int) -> float:
    return env.human_acceleration(i)


def necosa_target_speed(env: CorridorSimulator, i: int, ctx: SafetyContext, range_m: float) -> float:
    """Speed that reaches the stop line at the middle of the earliest usable green window."""

    ego = env.states[i]
    signal = env.cav_corridor.next_signal(ego.x)
    if signal is None or signal.position_m - ego.x > range_m:
        return ctx.v_max
    t = env.t
    view = signal.phase_at(t)
    distance = signal.position_m - ego.x

    window_end = view.next_red_start_s - ctx.B
    passes_now = (
        view.indication == GREEN
        and window_end - t > ctx.eps_time
        and distance / (window_end - t) <= ctx.v_max
    )
    if passes_now:
        t_pass = 0.5 * (t + window_end)
    else:
        t_pass = 0.5 * (view.upcoming_green_start_s + view.upcoming_green_end_s - ctx.B)
    if math.isinf(t_pass):
        return ctx.v_max
    return min(ctx.v_max, max(0.0, distance / max(t_pass - t, ctx.eps_time)))


def necosa(
    env: CorridorSimulator,
    i: int,
    pid: PidParams,
    state: PidState,
    ctx: SafetyContext,
    range_m: float,
) -> SafeFilterResult:
    v_ref = necosa_target_speed(env, i, ctx, range_m)
    raw = state.update(v_ref - env.states[i].v, env.tick_s, pid)
    result = filter_action(
        raw,
        env.states[i],
        env.predecessor(i),
        env.cav_corridor,
        env.t,
        ctx,
        sensing_range_m=range_m,
        vehicle_index=i,
    )
    env.fallbacks.update(i, env.t, result, ctx)
    return result


def ce_speed_region(env: CorridorSimulator, i: int, ctx: SafetyContext, range_m: float) -> Tuple[float, float]:
    """Admissible next-tick speed interval from current-tick signal arithmetic only."""

    ego = env.states[i]
    signal = env.cav_corridor.next_signal(ego.x)
    if signal is None or signal.position_m - ego.x > range_m:
        return 0.0, ctx.v_max
    t = env.t
    view = signal.phase_at(t)
    distance = signal.position_m - ego.x

    to_red = view.next_red_start_s - t
    if view.indication == GREEN and distance / max(to_red, ctx.eps_time) <= ctx.v_max:
        lo, hi = distance / max(to_red, ctx.eps_time), ctx.v_max
    else:
        lo = distance / max(view.upcoming_green_end_s - t - ctx.B, ctx.eps_time)
        hi = distance / max(view.upcoming_green_start_s - t, ctx.eps_time)
    hi = min(ctx.v_max, max(0.0, hi))
    lo = min(hi, max(0.0, lo))
    return lo, hi


def shield_action(
    mode: str,
    ahat: float,
    env: CorridorSimulator,
    i: int,
    ctx: SafetyContext,
    range_m: float,
) -> ShieldedAction:
    """Post-process a desired acceleration the way controller ``mode`` does.

    ``factor`` is ``d a / d ahat`` at ``ahat``.
    """

    if mode == "soft":
        a = min(ctx.a_max, max(-ctx.a_min_mag, ahat))
        return ShieldedAction(a=a, factor=1.0 if a == ahat else 0.0)
    if mode == "ce":
        v = env.states[i].v
        lo, hi = ce_speed_region(env, i, ctx, range_m)
        desired_v = v + ahat * env.tick_s
        next_v = min(hi, max(lo, desired_v))
        a = (next_v - v) / env.tick_s
        clipped = min(ctx.a_max, max(-ctx.a_min_mag, a))
        inside = next_v == desired_v and clipped == a
        return ShieldedAction(a=clipped, factor=1.0 if inside else 0.0)
    if mode in ("selfish", "platoon"):
        result = filter_action(
            ahat,
            env.states[i],
            env.predecessor(i),
            env.cav_corridor,
            env.t,
            ctx,
            sensing_range_m=range_m,
            vehicle_index=i,
        )
        env.fallbacks.update(i, env.t, result, ctx)
        factor, degenerate = result.gradient_factor()
        return ShieldedAction(a=result.a_safe, factor=factor, result=result, degenerate=degenerate)
    raise ConfigurationError(f"unknown RL mode {mode!r}")


def rl_policy(
    env: CorridorSimulator,
    i: int,
    net: PolicyNet,
    mode: str,
    ctx: SafetyContext,
    *,
    scales: ObservationScales,
    range_m: float,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, ShieldedAction]:
    """Desired action from the policy (mean, or a sample when ``rng`` is given) and its post-processed form."""

    obs = observe(env, i, scales=scales, communication_range_m=range_m).vector(scales, env.limits.v_max)
    mean, std, _ = net.forward(obs)
    ahat = float(mean[0]) if rng is None else float(rng.normal(mean[0], std[0]))
    ahat_clipped = min(ctx.a_max, max(-ctx.a_min_mag, ahat))
    return ahat, shield_action(mode, ahat_clipped, env, i, ctx, range_m)


class Controller:
    """Per-episode controller instance; owns any per-vehicle state."""

    kind: ControllerKind

    def __init__(self) -> None:
        self.last_branches: Dict[int, str] = {}

    def accelerations(self, env: CorridorSimulator) -> Dict[int, float]:
        raise NotImplementedError


class PureHdvController(Controller):
    kind = ControllerKind.PUREHDV

    def accelerations(self, env: CorridorSimulator) -> Dict[int, float]:
        self.last_branches = {}
        return {i: purehdv(env, i) for i in env.cav_indices}


class NecosaController(Controller):
    kind = ControllerKind.NECOSA

    def __init__(self, pid: PidParams, ctx: SafetyContext, range_m: float) -> None:
        super().__init__()
        self.pid = pid
        self.ctx = ctx
        self.range_m = range_m
        self._states: Dict[int, PidState] = {}

    def accelerations(self, env: CorridorSimulator) -> Dict[int, float]:
        actions: Dict[int, float] = {}
        self.last_branches = {}
        for i in env.cav_indices:
            result = necosa(env, i, self.pid, self._states.setdefault(i, PidState()), self.ctx, self.range_m)
            actions[i] = result.a_safe
            self.last_branches[i] = result.branch
        return actions


class RlController(Controller):
    def __init__(
        self,
        kind: ControllerKind,
        policies: Mapping[int, PolicyNet],
        ctx: SafetyContext,
        *,
        scales: ObservationScales,
        range_m: float,
    ) -> None:
        super().__init__()
        if not kind.is_rl:
            raise ConfigurationError(f"{kind.value} is not an RL controller")
        self.kind = kind
        self.policies = dict(policies)
        self.ctx = ctx
        self.scales = scales
        self.range_m = range_m

    def accelerations(self, env: CorridorSimulator) -> Dict[int, float]:
        missing = [i for i in env.cav_indices if i not in self.policies]
        if missing:
            raise ConfigurationError(f"no policy for CAV indices {missing}")
        actions: Dict[int, float] = {}
        self.last_branches = {}
        for i in env.cav_indices:
            _, shielded = rl_policy(
                env, i, self.policies[i], self.kind.rl_mode, self.ctx, scales=self.scales, range_m=self.range_m
            )
            actions[i] = shielded.a
            self.last_branches[i] = shielded.branch
        return actions
