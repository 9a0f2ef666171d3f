from __future__ import annotations

from dataclasses import replace
from pathlib import Path
import sys

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
PROJECT_SRC = PROJECT_ROOT / "src"
if str(PROJECT_SRC) not in sys.path:
    sys.path.insert(0, str(PROJECT_SRC))

from platoon_glosa.controllers import ControllerKind
from platoon_glosa.dynamics import IdmParams
from platoon_glosa.energy import EnergyConfig
from platoon_glosa.errors import ConfigurationError, NumericDivergenceError
from platoon_glosa.rl.env import RewardConfig, make_env_factory
from platoon_glosa.rl.mappo import (
    TrainConfig,
    _check_finite,
    actor_loss,
    clipped_objective,
    critic_loss,
    episode_seed,
    huber,
    normalize_advantages,
    td_residual,
    train,
)
from platoon_glosa.rl.networks import Mlp, PolicyNet, ValueNet, gaussian_log_prob
from platoon_glosa.rl.observation import ObservationScales
from platoon_glosa.safety import SafetyContext
from platoon_glosa.scenario import CorridorLayout, PlatoonSpec, ScenarioConfig

SMALL_TRAIN = TrainConfig(epochs=2, updates_per_epoch=1, minibatches=2)


def _make_factory():
    scenario = ScenarioConfig(horizon_s=30.0, platoon=PlatoonSpec(size=4, penetration_rate=0.5))
    return make_env_factory(
        scenario,
        idm=IdmParams(),
        energy=EnergyConfig(),
        safety=SafetyContext(),
        reward_cfg=RewardConfig(),
        scales=ObservationScales(),
        mode="platoon",
    )


def _make_policy_batch(seed: int = 0):
    rng = np.random.default_rng(seed)
    policy = PolicyNet(3, -4.0, 4.0, Mlp((3, 5, 2)).init_xavier(rng, head_scale=1.0))
    obs = rng.normal(size=(6, 3))
    mean, std, _ = policy.forward(obs)
    ahat = mean + std * rng.normal(size=6)
    # old policy slightly off so the ratios sit near, not at, one
    old_log_prob = gaussian_log_prob(ahat, mean, std) + rng.uniform(-0.05, 0.05, size=6)
    adv = rng.normal(size=6)
    return policy, obs, ahat, old_log_prob, adv


def test_clipped_objective_caps_the_ratio() -> None:
    assert clipped_objective(np.array([1.5]), np.array([1.0]), 0.2)[0] == pytest.approx(1.2)
    assert clipped_objective(np.array([1.0]), np.array([-3.0]), 0.2)[0] == pytest.approx(-3.0)
    assert clipped_objective(np.array([0.5]), np.array([-1.0]), 0.2)[0] == pytest.approx(-0.8)


def test_huber_branches_meet_at_the_knee() -> None:
    values = huber(np.array([0.5, 2.0, 1.0, -1.0]))

    np.testing.assert_allclose(values, [0.125, 1.5, 0.5, 0.5])


def test_td_residual() -> None:
    assert td_residual(1.0, 0.0, 0.0, 0.0, 0.9) == pytest.approx(1.0)
    assert td_residual(2.0 - 0.9 * 3.0, 2.0, 3.0, 0.0, 0.9) == pytest.approx(0.0)
    assert td_residual(1.0, 0.5, 10.0, 1.0, 0.9) == pytest.approx(0.5)


def test_constant_advantages_normalize_to_zero() -> None:
    np.testing.assert_array_equal(normalize_advantages(np.full(5, 3.0)), np.zeros(5))


def test_unit_factors_reproduce_plain_gradient() -> None:
    policy, obs, ahat, old_log_prob, adv = _make_policy_batch()

    plain_loss, plain = actor_loss(policy, obs, ahat, old_log_prob, adv, 0.2)
    shaped_loss, shaped = actor_loss(policy, obs, ahat, old_log_prob, adv, 0.2, np.ones(6))

    assert plain_loss == shaped_loss
    for a, b in zip(plain, shaped):
        np.testing.assert_array_equal(a, b)


def test_zero_factors_block_the_gradient() -> None:
    policy, obs, ahat, old_log_prob, adv = _make_policy_batch()

    _, grads = actor_loss(policy, obs, ahat, old_log_prob, adv, 0.2, np.zeros(6))

    assert all(np.all(g == 0.0) for g in grads)


def _numeric_grads(body: Mlp, loss) -> np.ndarray:
    h = 1e-6
    flat = body.get_flat()
    numeric = np.zeros_like(flat)
    for k in range(flat.size):
        bumped = flat.copy()
        bumped[k] += h
        body.set_flat(bumped)
        plus = loss()
        bumped[k] -= 2 * h
        body.set_flat(bumped)
        minus = loss()
        numeric[k] = (plus - minus) / (2 * h)
    body.set_flat(flat)
    return numeric


def test_actor_gradient_matches_finite_differences() -> None:
    for seed in range(100):
        policy, obs, ahat, old_log_prob, adv = _make_policy_batch(seed)

        _, grads = actor_loss(policy, obs, ahat, old_log_prob, adv, 0.2)
        analytic = np.concatenate([g.ravel() for g in grads])
        numeric = _numeric_grads(policy.body, lambda: actor_loss(policy, obs, ahat, old_log_prob, adv, 0.2)[0])

        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


def test_critic_gradient_matches_finite_differences() -> None:
    for seed in range(100):
        rng = np.random.default_rng(seed)
        value = ValueNet(4, Mlp((4, 5, 1)).init_xavier(rng, head_scale=1.0))
        states = rng.normal(size=(5, 4))
        next_states = rng.normal(size=(5, 4))
        rewards = rng.normal(scale=2.0, size=5)
        dones = np.array([0.0, 0.0, 1.0, 0.0, 0.0])

        _, grads = critic_loss(value, states, rewards, next_states, dones, 0.9)
        analytic = np.concatenate([g.ravel() for g in grads])

        # the bootstrap target is held fixed, so perturb V(s) only
        next_values, _ = value.forward(next_states)
        targets = rewards + 0.9 * (1.0 - dones) * next_values
        numeric = _numeric_grads(value.body, lambda: float(huber(targets - value.forward(states)[0]).mean()))

        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


def test_episode_seeds_differ_per_epoch() -> None:
    assert episode_seed(0, 1) == episode_seed(0, 1)
    assert episode_seed(0, 1) != episode_seed(0, 2)
    assert episode_seed(0, 1) != episode_seed(1, 1)


def test_train_config_validation() -> None:
    with pytest.raises(ConfigurationError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(minibatches=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(optimizer="lbfgs")


def test_zero_learning_rate_leaves_parameters_untouched() -> None:
    cfg = replace(SMALL_TRAIN, actor_lr=0.0, critic_lr=0.0)
    initial = train(_make_factory(), replace(cfg, epochs=0), seed=1)

    trained = train(_make_factory(), cfg, seed=1)

    for i, nets in trained.agents.items():
        np.testing.assert_array_equal(nets.policy.body.get_flat(), initial.agents[i].policy.body.get_flat())
        np.testing.assert_array_equal(nets.value.body.get_flat(), initial.agents[i].value.body.get_flat())


def test_training_is_deterministic() -> None:
    first = train(_make_factory(), SMALL_TRAIN, seed=5)
    second = train(_make_factory(), SMALL_TRAIN, seed=5)

    assert first.curve == second.curve
    assert len(first.curve) == 2 * 2
    for i in first.agents:
        np.testing.assert_array_equal(
            first.agents[i].policy.body.get_flat(), second.agents[i].policy.body.get_flat()
        )


def test_controller_kind_sets_mode_and_reward_variant() -> None:
    seen = []

    def factory(seed: int):
        env = _make_factory()(seed)
        seen.append(env)
        return env

    train(factory, replace(SMALL_TRAIN, epochs=1), RewardConfig(), ControllerKind.RL_SELFISH, seed=0)

    assert seen[0].mode == "selfish"
    assert seen[0].reward_cfg.follower_scope == "self-only"


def test_shared_parameters_use_one_network() -> None:
    result = train(_make_factory(), replace(SMALL_TRAIN, epochs=1, shared_parameters=True), seed=0)

    first, second = (result.agents[i] for i in sorted(result.agents))
    assert first is second


def test_epoch_callback_sees_every_epoch() -> None:
    epochs = []

    train(_make_factory(), SMALL_TRAIN, seed=0, on_epoch=lambda epoch, agents, rows: epochs.append(epoch))

    assert epochs == [0, 1]


def test_non_finite_parameters_abort_training() -> None:
    result = train(_make_factory(), replace(SMALL_TRAIN, epochs=0), seed=0)
    nets = next(iter(result.agents.values()))
    nets.policy.body.params[0][0, 0] = np.nan

    with pytest.raises(NumericDivergenceError):
        _check_finite(result.agents, epoch=3)


def _make_toy_factory():
    # one CAV behind one human driver, one signal
    scenario = ScenarioConfig(
        horizon_s=60.0,
        corridor=CorridorLayout(stop_lines_m=(200.0,)),
        platoon=PlatoonSpec(size=2, cav_assignment=("hdv", "cav")),
    )
    return make_env_factory(
        scenario,
        idm=IdmParams(),
        energy=EnergyConfig(),
        safety=SafetyContext(),
        reward_cfg=RewardConfig(),
        scales=ObservationScales(),
        mode="platoon",
    )


def _improved(means) -> bool:
    first, last = float(np.mean(means[:10])), float(np.mean(means[-10:]))
    # a 20% gain measured against the size of the starting reward, whatever its sign
    return last - first >= 0.2 * abs(first)


@pytest.mark.slow
def test_training_improves_the_toy_reward() -> None:
    improved = 0
    for seed in range(5):
        result = train(_make_toy_factory(), TrainConfig(epochs=200), kind=ControllerKind.RL_PLATOON, seed=seed)
        improved += _improved(result.epoch_means())

    assert improved >= 4
