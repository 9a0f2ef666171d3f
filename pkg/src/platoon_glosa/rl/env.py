"""Multi-agent environment: per-CAV observations, shielded actions and rewards."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..controllers import ShieldedAction, shield_action
from ..dynamics import IdmParams
from ..energy import EnergyConfig
from ..errors import ConfigurationError
from ..pipelines.disturbances import DisturbanceSpec
from ..safety import SafetyContext
from ..scenario import ScenarioConfig, build_scenario
from ..simulator import CorridorSimulator, StepOutcome
from .observation import ObservationScales, global_state, global_state_size, observe

SELF_ONLY = "self-only"
ALL_FOLLOWERS = "all-followers"


@dataclass(frozen=True)
class RewardConfig:
    w_safety: float = 5.0
    w_efficiency: float = 10.0
    w_stability: float = 5.0
    w_energy: float = 1.0
    kappa: float = 0.9
    follower_scope: str = ALL_FOLLOWERS
    soft_penalty: float = 10.0
    soft_safety: bool = False

    def __post_init__(self) -> None:
        if min(self.w_safety, self.w_efficiency, self.w_stability, self.w_energy) < 0:
            raise ConfigurationError("reward weights must be non-negative")
        if not 0.0 < self.kappa <= 1.0:
            raise ConfigurationError("reward.kappa must lie in (0, 1]")
        if self.follower_scope not in (SELF_ONLY, ALL_FOLLOWERS):
            raise ConfigurationError(f"unknown follower scope {self.follower_scope!r}")

    @classmethod
    def for_mode(cls, base: "RewardConfig", mode: str) -> "RewardConfig":
        """Reward variant a training mode uses, derived from ``base``."""

        scope = SELF_ONLY if mode == "selfish" else ALL_FOLLOWERS
        return cls(
            w_safety=base.w_safety,
            w_efficiency=base.w_efficiency,
            w_stability=base.w_stability,
            w_energy=base.w_energy,
            kappa=base.kappa,
            follower_scope=scope,
            soft_penalty=base.soft_penalty,
            soft_safety=mode == "softsafe",
        )


@dataclass(frozen=True)
class RewardBreakdown:
    safety: float
    efficiency: float
    stability: float
    energy: float
    total: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "safety": self.safety,
            "efficiency": self.efficiency,
            "stability": self.stability,
            "energy": self.energy,
        }


def reward(
    outcome: StepOutcome,
    cav_index: int,
    ahat: float,
    a_safe: float,
    cfg: RewardConfig,
    *,
    collided: bool = False,
    ran_red: bool = False,
) -> RewardBreakdown:
    """Weighted reward of one CAV after a tick.

    Stability sums squared accelerations of the vehicles behind ``cav_index``;
    energy sums consumption (kJ) of the ego and the vehicles behind it. Both
    decay by ``kappa`` per position.
    """

    n = len(outcome.after)
    last = cav_index if cfg.follower_scope == SELF_ONLY else n - 1

    if cfg.soft_safety:
        r_safety = -cfg.soft_penalty * (float(collided) + float(ran_red))
    else:
        r_safety = -((ahat - a_safe) ** 2)
    r_efficiency = outcome.after[cav_index].v
    r_stability = -sum(cfg.kappa ** (j - cav_index) * outcome.accel[j] ** 2 for j in range(cav_index + 1, last + 1))
    r_energy = -sum(cfg.kappa ** (j - cav_index) * outcome.ec_j[j] / 1000.0 for j in range(cav_index, last + 1))

    total = (
        cfg.w_safety * r_safety
        + cfg.w_efficiency * r_efficiency
        + cfg.w_stability * r_stability
        + cfg.w_energy * r_energy
    )
    return RewardBreakdown(
        safety=float(r_safety),
        efficiency=float(r_efficiency),
        stability=float(r_stability),
        energy=float(r_energy),
        total=float(total),
    )


@dataclass
class Transition:
    observation: np.ndarray
    state: np.ndarray
    ahat: float
    a_safe: float
    log_prob: float
    reward: RewardBreakdown
    next_state: np.ndarray
    done: bool
    factor: float = 1.0


@dataclass
class EnvStep:
    outcome: StepOutcome
    actions: Dict[int, ShieldedAction]
    rewards: Dict[int, RewardBreakdown]
    dones: Dict[int, bool]
    next_state: np.ndarray


@dataclass
class PlatoonEnv:
    """A corridor episode seen from the CAV agents.

    Actors read :func:`observe`; critics read the ground-truth global state.
    """

    scenario: ScenarioConfig
    idm: IdmParams
    energy: EnergyConfig
    safety: SafetyContext
    reward_cfg: RewardConfig
    scales: ObservationScales
    mode: str
    disturbance: Optional[DisturbanceSpec] = None
    sim: CorridorSimulator = field(init=False)

    def __post_init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        instance = build_scenario(self.scenario)
        self.sim = CorridorSimulator.from_scenario(
            self.scenario, instance, idm=self.idm, energy=self.energy, disturbance=self.disturbance
        )
        self._done = {i: False for i in self.sim.cav_indices}

    @property
    def agents(self) -> List[int]:
        return self.sim.cav_indices

    @property
    def obs_dim(self) -> int:
        return 8

    @property
    def state_dim(self) -> int:
        return global_state_size(self.sim.n_vehicles, len(self.agents), len(self.sim.corridor.signals))

    @property
    def done(self) -> bool:
        return self.sim.done

    def agent_done(self, i: int) -> bool:
        return self._done[i]

    def observation(self, i: int) -> np.ndarray:
        obs = observe(self.sim, i, scales=self.scales, communication_range_m=self.scenario.communication_range_m)
        return obs.vector(self.scales, self.sim.limits.v_max)

    def global_state(self) -> np.ndarray:
        return global_state(self.sim, scales=self.scales)

    def step(self, desired: Mapping[int, float]) -> EnvStep:
        actions: Dict[int, ShieldedAction] = {}
        for i in self.agents:
            ahat = min(self.safety.a_max, max(-self.safety.a_min_mag, float(desired[i])))
            actions[i] = shield_action(self.mode, ahat, self.sim, i, self.safety, self.scenario.communication_range_m)

        outcome = self.sim.step({i: act.a for i, act in actions.items()})
        red_runners = {c.vehicle for c in outcome.crossings if c.red_violation}

        rewards: Dict[int, RewardBreakdown] = {}
        dones: Dict[int, bool] = {}
        for i in self.agents:
            ahat = min(self.safety.a_max, max(-self.safety.a_min_mag, float(desired[i])))
            rewards[i] = reward(
                outcome,
                i,
                ahat,
                actions[i].a,
                self.reward_cfg,
                collided=bool(outcome.gap_net[i] < 0.0) if i > 0 else False,
                ran_red=i in red_runners,
            )
            finished = self.sim.passed_last_line(i) or self.sim.done
            dones[i] = finished and not self._done[i]
            self._done[i] = self._done[i] or finished
        return EnvStep(outcome=outcome, actions=actions, rewards=rewards, dones=dones, next_state=self.global_state())


EnvFactory = Callable[[int], PlatoonEnv]


def make_env_factory(
    scenario: ScenarioConfig,
    *,
    idm: IdmParams,
    energy: EnergyConfig,
    safety: SafetyContext,
    reward_cfg: RewardConfig,
    scales: ObservationScales,
    mode: str,
    disturbance: Optional[DisturbanceSpec] = None,
) -> EnvFactory:
    """Factory producing a fresh environment for a given scenario seed."""

    def factory(seed: int) -> PlatoonEnv:
        return PlatoonEnv(
            scenario=replace(scenario, seed=int(seed)),
            idm=idm,
            energy=energy,
            safety=safety,
            reward_cfg=reward_cfg,
            scales=scales,
            mode=mode,
            disturbance=disturbance,
        )

    return factory


def split_transitions(transitions: List[Transition]) -> Tuple[np.ndarray, ...]:
    obs = np.stack([tr.observation for tr in transitions])
    states = np.stack([tr.state for tr in transitions])
    next_states = np.stack([tr.next_state for tr in transitions])
    ahat = np.array([tr.ahat for tr in transitions])
    log_prob = np.array([tr.log_prob for tr in transitions])
    rewards = np.array([tr.reward.total for tr in transitions])
    dones = np.array([tr.done for tr in transitions], dtype=float)
    factors = np.array([tr.factor for tr in transitions])
    return obs, states, ahat, log_prob, rewards, next_states, dones, factors
