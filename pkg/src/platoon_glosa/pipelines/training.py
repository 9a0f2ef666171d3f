"""Train one RL controller on the configured scenario and persist the results."""

from __future__ import annotations

import logging
from dataclasses import asdict, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from ..config import GlosaConfig
from ..controllers import ControllerKind
from ..data_sources.csv_io import atomic_write_frame
from ..errors import ConfigurationError
from ..rl.checkpoint import save_agent_set
from ..rl.env import EnvFactory, RewardConfig, make_env_factory
from ..rl.mappo import AgentNets, CurveRow, TrainResult, train

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("epoch", "agent", "mean_reward", "safety", "efficiency", "stability", "energy")


def training_env_factory(config: GlosaConfig, kind: ControllerKind) -> EnvFactory:
    if not kind.is_rl:
        raise ConfigurationError(f"{kind.value} has nothing to train")
    return make_env_factory(
        config.scenario,
        idm=config.idm,
        energy=config.energy,
        safety=config.safety,
        reward_cfg=RewardConfig.for_mode(config.reward, kind.train_mode),
        scales=config.observation,
        mode=kind.rl_mode,
    )


def curve_frame(rows: List[CurveRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=list(CURVE_COLUMNS))


def _save(directory: Path, agents: Dict[int, AgentNets], kind: ControllerKind) -> None:
    save_agent_set(
        directory,
        {i: nets.policy for i, nets in agents.items()},
        {i: nets.value for i, nets in agents.items()},
        kind=kind.value,
    )


def train_controller(
    config: GlosaConfig,
    kind: ControllerKind,
    *,
    checkpoint_dir: Union[str, Path],
    curve_csv: Union[str, Path],
    epochs: Optional[int] = None,
) -> TrainResult:
    """Train ``kind`` and keep the checkpoints and curve current after every epoch.

    Checkpoints are only rewritten after an epoch whose parameters are all
    finite, so a divergence leaves the last good set on disk.
    """

    train_cfg = config.train if epochs is None else replace(config.train, epochs=int(epochs))
    checkpoint_dir = Path(checkpoint_dir)
    curve_csv = Path(curve_csv)
    rows: List[CurveRow] = []

    def on_epoch(epoch: int, agents: Dict[int, AgentNets], epoch_rows: List[CurveRow]) -> None:
        rows.extend(epoch_rows)
        _save(checkpoint_dir, agents, kind)
        atomic_write_frame(curve_frame(rows), curve_csv)

    result = train(
        training_env_factory(config, kind),
        train_cfg,
        config.reward,
        kind,
        seed=config.scenario.seed,
        on_epoch=on_epoch,
    )
    if train_cfg.epochs == 0:
        _save(checkpoint_dir, result.agents, kind)
        atomic_write_frame(curve_frame(rows), curve_csv)
    logger.info("trained %s for %d epochs; checkpoints in %s", kind.value, train_cfg.epochs, checkpoint_dir)
    return result
