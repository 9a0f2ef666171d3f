"""Multi-agent PPO with centralized critics and per-agent actors.

Each CAV owns a policy fed by its local observation and a critic fed by
the ground-truth global state. Updates use the clipped surrogate for the
actor, a Huber TD loss for the critic and one-step TD advantages. When the
safety filter sits between the policy and the vehicle, each sample's actor
gradient is scaled by the filter's ``d a / d ahat``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..controllers import ControllerKind
from ..errors import ConfigurationError, NumericDivergenceError
from ..scenario import rng_stream
from .env import EnvFactory, PlatoonEnv, RewardConfig, Transition, split_transitions
from .networks import PolicyNet, ValueNet, gaussian_log_prob, gaussian_log_prob_grads, make_optimizer

logger = logging.getLogger(__name__)

ADVANTAGE_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    clip_eps: float = 0.2
    actor_lr: float = 1e-2
    critic_lr: float = 1e-3
    updates_per_epoch: int = 10
    minibatches: int = 32
    epochs: int = 500
    seeds: Tuple[int, ...] = (0,)
    optimizer: str = "adam"
    qp_gradient: bool = True
    shared_parameters: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("train.gamma must lie in (0, 1]")
        if self.clip_eps <= 0:
            raise ConfigurationError("train.clip_eps must be positive")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ConfigurationError("learning rates must be non-negative")
        if self.updates_per_epoch < 1 or self.minibatches < 1 or self.epochs < 0:
            raise ConfigurationError("updates_per_epoch and minibatches must be >= 1, epochs >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class AgentNets:
    policy: PolicyNet
    value: ValueNet
    actor_opt: object = None
    critic_opt: object = None


@dataclass(frozen=True)
class CurveRow:
    epoch: int
    agent: int
    mean_reward: float
    safety: float
    efficiency: float
    stability: float
    energy: float


@dataclass
class TrainResult:
    agents: Dict[int, AgentNets]
    curve: List[CurveRow] = field(default_factory=list)

    def epoch_means(self) -> List[float]:
        by_epoch: Dict[int, List[float]] = {}
        for row in self.curve:
            by_epoch.setdefault(row.epoch, []).append(row.mean_reward)
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


def huber(delta: np.ndarray) -> np.ndarray:
    abs_delta = np.abs(delta)
    return np.where(abs_delta < 1.0, 0.5 * delta * delta, abs_delta - 0.5)


def huber_grad(delta: np.ndarray) -> np.ndarray:
    return np.where(np.abs(delta) < 1.0, delta, np.sign(delta))


def td_residual(rewards, values, next_values, dones, gamma: float) -> np.ndarray:
    """``r + gamma * V(s') - V(s)`` with no bootstrap at terminal samples."""

    return np.asarray(rewards) + gamma * (1.0 - np.asarray(dones)) * np.asarray(next_values) - np.asarray(values)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=float)
    std = adv.std()
    return (adv - adv.mean()) / max(std, ADVANTAGE_STD_FLOOR)


def advantage(transition: Transition, value_net: ValueNet, gamma: float) -> float:
    value, _ = value_net.forward(transition.state)
    next_value, _ = value_net.forward(transition.next_state)
    return float(td_residual(transition.reward.total, value[0], next_value[0], float(transition.done), gamma))


def clipped_objective(ratio: np.ndarray, adv: np.ndarray, clip_eps: float) -> np.ndarray:
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


def actor_loss(
    policy: PolicyNet,
    obs: np.ndarray,
    ahat: np.ndarray,
    old_log_prob: np.ndarray,
    adv: np.ndarray,
    clip_eps: float,
    factors: Optional[np.ndarray] = None,
) -> Tuple[float, List[np.ndarray]]:
    """Negated mean clipped surrogate and its parameter gradient.

    ``factors`` multiplies each sample's gradient; ``None`` is the plain
    PPO path.
    """

    mean, std, cache = policy.forward(obs)
    log_prob = gaussian_log_prob(ahat, mean, std)
    ratio = np.exp(log_prob - old_log_prob)
    objective = clipped_objective(ratio, adv, clip_eps)
    loss = -float(objective.mean())

    clipped = ((adv >= 0) & (ratio > 1.0 + clip_eps)) | ((adv < 0) & (ratio < 1.0 - clip_eps))
    d_logp = np.where(clipped, 0.0, ratio * adv)
    if factors is not None:
        d_logp = d_logp * factors
    d_logp = -d_logp / len(ahat)
    d_mean_lp, d_std_lp = gaussian_log_prob_grads(ahat, mean, std)
    grads = policy.backward(cache, d_logp * d_mean_lp, d_logp * d_std_lp)
    return loss, grads


def critic_loss(
    value_net: ValueNet,
    states: np.ndarray,
    rewards: np.ndarray,
    next_states: np.ndarray,
    dones: np.ndarray,
    gamma: float,
) -> Tuple[float, List[np.ndarray]]:
    """Mean Huber TD loss; the bootstrap target is held fixed."""

    values, cache = value_net.forward(states)
    next_values, _ = value_net.forward(next_states)
    delta = td_residual(rewards, values, next_values, dones, gamma)
    loss = float(huber(delta).mean())
    d_values = -huber_grad(delta) / len(delta)
    return loss, value_net.backward(cache, d_values)


def _average(grad_sets: Sequence[List[np.ndarray]]) -> List[np.ndarray]:
    out = [np.zeros_like(g) for g in grad_sets[0]]
    for grads in grad_sets:
        for k, g in enumerate(grads):
            out[k] += g
    return [g / len(grad_sets) for g in out]


def init_agents(env: PlatoonEnv, cfg: TrainConfig, rng: np.random.Generator) -> Dict[int, AgentNets]:
    agents: Dict[int, AgentNets] = {}
    shared: Optional[AgentNets] = None
    for i in env.agents:
        if cfg.shared_parameters and shared is not None:
            agents[i] = shared
            continue
        policy = PolicyNet(env.obs_dim, -env.safety.a_min_mag, env.safety.a_max)
        policy.body.init_xavier(rng)
        value = ValueNet(env.state_dim)
        value.body.init_xavier(rng)
        nets = AgentNets(
            policy=policy,
            value=value,
            actor_opt=make_optimizer(cfg.optimizer, cfg.actor_lr),
            critic_opt=make_optimizer(cfg.optimizer, cfg.critic_lr),
        )
        agents[i] = nets
        shared = nets
    return agents


def rollout(
    env: PlatoonEnv,
    agents: Dict[int, AgentNets],
    rng: np.random.Generator,
) -> Dict[int, List[Transition]]:
    """One full episode with sampled actions; transitions stop at each agent's passage."""

    buffers: Dict[int, List[Transition]] = {i: [] for i in env.agents}
    while not env.done:
        state = env.global_state()
        obs, sampled, log_probs = {}, {}, {}
        for i in env.agents:
            obs[i] = env.observation(i)
            mean, std, _ = agents[i].policy.forward(obs[i])
            sampled[i] = float(rng.normal(mean[0], std[0]))
            log_probs[i] = float(gaussian_log_prob(np.array([sampled[i]]), mean, std)[0])
        active = [i for i in env.agents if not env.agent_done(i)]
        result = env.step(sampled)
        for i in active:
            buffers[i].append(
                Transition(
                    observation=obs[i],
                    state=state,
                    ahat=sampled[i],
                    a_safe=result.actions[i].a,
                    log_prob=log_probs[i],
                    reward=result.rewards[i],
                    next_state=result.next_state,
                    done=result.dones[i] or env.done,
                    factor=result.actions[i].factor,
                )
            )
    return buffers


def update_agent(
    nets: AgentNets,
    transitions: List[Transition],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> None:
    if not transitions:
        return
    obs, states, ahat, old_lp, rewards, next_states, dones, factors = split_transitions(transitions)
    use_factors = factors if cfg.qp_gradient else None
    for _ in range(cfg.updates_per_epoch):
        order = rng.permutation(len(transitions))
        groups = [g for g in np.array_split(order, min(cfg.minibatches, len(order))) if g.size]
        actor_grads, critic_grads = [], []
        for idx in groups:
            values, _ = nets.value.forward(states[idx])
            next_values, _ = nets.value.forward(next_states[idx])
            adv = normalize_advantages(td_residual(rewards[idx], values, next_values, dones[idx], cfg.gamma))
            _, g_actor = actor_loss(
                nets.policy,
                obs[idx],
                ahat[idx],
                old_lp[idx],
                adv,
                cfg.clip_eps,
                None if use_factors is None else use_factors[idx],
            )
            _, g_critic = critic_loss(nets.value, states[idx], rewards[idx], next_states[idx], dones[idx], cfg.gamma)
            actor_grads.append(g_actor)
            critic_grads.append(g_critic)
        nets.actor_opt.step(nets.policy.body.params, _average(actor_grads))
        nets.critic_opt.step(nets.value.body.params, _average(critic_grads))


def _check_finite(agents: Dict[int, AgentNets], epoch: int) -> None:
    for i, nets in agents.items():
        for name, body in (("policy", nets.policy.body), ("value", nets.value.body)):
            if not np.all(np.isfinite(body.get_flat())):
                raise NumericDivergenceError(f"non-finite {name} parameters for agent {i} at epoch {epoch}")


def episode_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(epoch)]).generate_state(1)[0])


def train(
    env_factory: EnvFactory,
    cfg: TrainConfig,
    reward_cfg: Optional[RewardConfig] = None,
    kind: Optional[ControllerKind] = None,
    *,
    seed: int = 0,
    on_epoch: Optional[Callable[[int, Dict[int, AgentNets], List[CurveRow]], None]] = None,
) -> TrainResult:
    """Train one set of per-CAV actors and critics.

    Every epoch rolls out a fresh episode whose scenario seed is derived from
    ``seed`` and the epoch number, then runs the PPO updates. When ``kind``
    is given, every environment uses that controller's action
    post-processing and its reward variant of ``reward_cfg``. ``on_epoch`` is
    called after each epoch with the curve rows of that epoch, after the
    parameters are checked to be finite.
    """

    def make_env(epoch: int) -> PlatoonEnv:
        env = env_factory(episode_seed(seed, epoch))
        if kind is not None:
            env.mode = kind.rl_mode
            env.reward_cfg = RewardConfig.for_mode(reward_cfg or env.reward_cfg, kind.train_mode)
        elif reward_cfg is not None:
            env.reward_cfg = reward_cfg
        return env

    init_env = make_env(0)
    agents = init_agents(init_env, cfg, rng_stream(seed, "policy-init"))
    policy_rng = rng_stream(seed, "policy")
    update_rng = rng_stream(seed, "minibatch")
    result = TrainResult(agents=agents)

    for epoch in range(cfg.epochs):
        env = init_env if epoch == 0 else make_env(epoch)
        if env.agents != list(agents):
            raise ConfigurationError("CAV placement changed between episodes")
        buffers = rollout(env, agents, policy_rng)

        updated = set()
        for i, nets in agents.items():
            if id(nets) in updated:
                continue
            samples = buffers[i] if not cfg.shared_parameters else [t for b in buffers.values() for t in b]
            update_agent(nets, samples, cfg, update_rng)
            updated.add(id(nets))
        _check_finite(agents, epoch)

        rows = []
        for i, transitions in buffers.items():
            totals = [t.reward for t in transitions]
            rows.append(
                CurveRow(
                    epoch=epoch,
                    agent=i,
                    mean_reward=float(sum(r.total for r in totals)),
                    safety=float(sum(r.safety for r in totals)),
                    efficiency=float(sum(r.efficiency for r in totals)),
                    stability=float(sum(r.stability for r in totals)),
                    energy=float(sum(r.energy for r in totals)),
                )
            )
        result.curve.extend(rows)
        logger.info(
            "epoch %d/%d mean episode reward %.3f",
            epoch + 1,
            cfg.epochs,
            float(np.mean([r.mean_reward for r in rows])) if rows else float("nan"),
        )
        if on_epoch is not None:
            on_epoch(epoch, agents, rows)
    return result
