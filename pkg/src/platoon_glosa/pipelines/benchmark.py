"""Benchmark matrix: controllers x penetration rates x seeds x scenario modes."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..config import EXTREME, REGULAR, SWEEP_PARAMETERS, GlosaConfig
from ..controllers import Controller, ControllerKind, NecosaController, PureHdvController, RlController
from ..errors import CheckpointError, ConfigurationError
from ..rl.checkpoint import checkpoint_dir, load_policy_set
from ..rl.observation import OBSERVATION_SIZE
from ..scenario import build_scenario
from .disturbances import DisturbanceSpec, extreme_preset
from .episode import EpisodeResult, run_episode
from .metrics import METRIC_NAMES, EpisodeMetrics, compute_metrics

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("pr", "kind", "mode", "metric", "mean", "std", "n")
REPORTED_METRICS = METRIC_NAMES + ("fallbacks",)
TABLE_LABELS = {
    "dist2pv_min": "Dist2PV",
    "ttc_min": "TTC",
    "noc": "NoC",
    "dist2tl_min": "Dist2TL",
    "t2tl_min": "T2TL",
    "vor": "VoR",
    "avg_v": "AvgV",
    "t2p": "T2P",
    "ec_total": "EC",
    "delta_ec": "ΔEC",
    "imp": "Imp",
}


@dataclass(frozen=True)
class Cell:
    pr: float
    kind: ControllerKind
    mode: str
    seed: int


def disturbance_for(config: GlosaConfig, mode: str) -> Optional[DisturbanceSpec]:
    if mode == REGULAR:
        return None
    if mode == EXTREME:
        return extreme_preset(build_scenario(config.scenario).kinds)
    raise ConfigurationError(f"unknown scenario mode {mode!r}")


def make_controller(config: GlosaConfig, kind: ControllerKind, checkpoint_root: Union[str, Path]) -> Controller:
    """Controller for one episode; RL kinds load the agent set for this platoon layout."""

    if kind is ControllerKind.PUREHDV:
        return PureHdvController()
    if kind is ControllerKind.NECOSA:
        return NecosaController(config.pid, config.safety, config.scenario.communication_range_m)
    platoon = config.scenario.platoon
    directory = checkpoint_dir(Path(checkpoint_root), kind.train_mode, platoon.penetration_rate, platoon.size)
    policies = load_policy_set(directory, kind=kind.value, obs_dim=OBSERVATION_SIZE)
    needed = build_scenario(config.scenario).kinds
    missing = [i for i, k in enumerate(needed) if k.value == "cav" and i not in policies]
    if missing:
        raise CheckpointError(f"{directory}: no policy for CAV indices {missing}")
    return RlController(
        kind,
        policies,
        config.safety,
        scales=config.observation,
        range_m=config.scenario.communication_range_m,
    )


def run_single(
    config: GlosaConfig,
    kind: ControllerKind,
    mode: str,
    checkpoint_root: Union[str, Path],
) -> EpisodeResult:
    controller = make_controller(config, kind, checkpoint_root)
    return run_episode(
        config.scenario,
        controller,
        idm=config.idm,
        energy=config.energy,
        disturbance=disturbance_for(config, mode),
    )


def _run_cell(job: Tuple[GlosaConfig, Cell, str]) -> Tuple[Cell, Optional[EpisodeMetrics]]:
    config, cell, checkpoint_root = job
    try:
        episode = run_single(config, cell.kind, cell.mode, checkpoint_root)
    except CheckpointError as exc:
        logger.warning("skipping %s at PR %.2f (%s, seed %d): %s", cell.kind.value, cell.pr, cell.mode, cell.seed, exc)
        return cell, None
    return cell, compute_metrics(episode.trajectory, episode.corridor)


def _execute(jobs: List[Tuple[GlosaConfig, Cell, str]], workers: int) -> Dict[Cell, Optional[EpisodeMetrics]]:
    if workers <= 1 or len(jobs) <= 1:
        return dict(_run_cell(job) for job in jobs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return dict(pool.map(_run_cell, jobs))


def _with_reference(metrics: EpisodeMetrics, reference_ec: Optional[float]) -> EpisodeMetrics:
    if reference_ec is None:
        return metrics
    delta = metrics.ec_total - reference_ec
    imp = -delta / reference_ec * 100.0 if reference_ec != 0 else math.nan
    return replace(metrics, delta_ec=delta, imp=imp)


def _aggregate(values: Sequence[float]) -> Tuple[float, float, int]:
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan, 0
    if np.all(np.isinf(arr)) and np.all(arr > 0):
        return math.inf, 0.0, int(arr.size)
    return float(arr.mean()), float(arr.std()), int(arr.size)


def _rows(
    config: GlosaConfig,
    cells: Iterable[Cell],
    kinds: Sequence[ControllerKind],
    prs: Sequence[float],
    seeds: Sequence[int],
    modes: Sequence[str],
    checkpoint_root: Union[str, Path],
    workers: int,
) -> List[dict]:
    cells = list(cells)
    reference_cells = [Cell(0.0, ControllerKind.PUREHDV, mode, seed) for mode in modes for seed in seeds]
    jobs = []
    for cell in {*cells, *reference_cells}:
        cfg = config.with_penetration_rate(cell.pr).with_seed(cell.seed)
        jobs.append((cfg, cell, str(checkpoint_root)))
    jobs.sort(key=lambda job: (job[1].pr, job[1].kind.value, job[1].mode, job[1].seed))
    results = _execute(jobs, workers)

    rows = []
    for pr in prs:
        for kind in kinds:
            for mode in modes:
                per_seed: List[EpisodeMetrics] = []
                for seed in seeds:
                    metrics = results.get(Cell(pr, kind, mode, seed))
                    if metrics is None:
                        continue
                    is_reference = pr == 0.0 and kind is ControllerKind.PUREHDV
                    reference = results[Cell(0.0, ControllerKind.PUREHDV, mode, seed)]
                    per_seed.append(metrics if is_reference else _with_reference(metrics, reference.ec_total))
                if not per_seed:
                    continue
                for name in REPORTED_METRICS:
                    mean, std, n = _aggregate([float(getattr(m, name)) for m in per_seed])
                    rows.append({"pr": pr, "kind": kind.value, "mode": mode, "metric": name, "mean": mean, "std": std, "n": n})
    return rows


def run_benchmark_matrix(
    config: GlosaConfig,
    kinds: Sequence[ControllerKind],
    prs: Sequence[float],
    seeds: Sequence[int],
    modes: Sequence[str] = (REGULAR, EXTREME),
    *,
    checkpoint_root: Union[str, Path] = "outputs/checkpoints",
    workers: int = 1,
) -> pd.DataFrame:
    """Long results table, one row per (pr, kind, mode, metric).

    ΔEC and Imp are paired by seed and mode against PureHDV at PR 0. RL cells
    without checkpoints are skipped with a warning.
    """

    cells = [Cell(float(pr), kind, mode, int(seed)) for pr in prs for kind in kinds for mode in modes for seed in seeds]
    rows = _rows(config, cells, kinds, [float(p) for p in prs], seeds, modes, checkpoint_root, workers)
    frame = pd.DataFrame(rows, columns=list(RESULT_COLUMNS))
    return frame.sort_values(["pr", "kind", "mode"], kind="stable").reset_index(drop=True)


def _with_sweep_value(config: GlosaConfig, parameter: str, value: float) -> GlosaConfig:
    if parameter == "communication_range_m":
        return replace(config, scenario=replace(config.scenario, communication_range_m=float(value)))
    if parameter == "platoon_size":
        platoon = replace(config.scenario.platoon, size=int(value))
        return replace(config, scenario=replace(config.scenario, platoon=platoon))
    raise ConfigurationError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")


def run_sweep(
    config: GlosaConfig,
    parameter: str,
    values: Sequence[float],
    kinds: Sequence[ControllerKind],
    seeds: Sequence[int],
    *,
    checkpoint_root: Union[str, Path] = "outputs/checkpoints",
    workers: int = 1,
) -> pd.DataFrame:
    """Regular-scenario benchmark at the sweep penetration rate for each parameter value."""

    pr = config.eval.sweep_penetration_rate
    frames = []
    for value in values:
        swept = _with_sweep_value(config, parameter, value)
        frame = run_benchmark_matrix(
            swept, kinds, [pr], seeds, (REGULAR,), checkpoint_root=checkpoint_root, workers=workers
        )
        frame.insert(0, "value", value)
        frame.insert(0, "parameter", parameter)
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["parameter", "value", *RESULT_COLUMNS])
    return pd.concat(frames, ignore_index=True)


def _format_cell(mean: float, std: float) -> str:
    if math.isnan(mean):
        return "--"
    return f"{mean:.2f} (±{std:.2f})"


def summarize_table(results: pd.DataFrame) -> pd.DataFrame:
    """Wide table with one row per configuration and ``mean (±std)`` cells."""

    keys = [c for c in ("parameter", "value", "pr", "kind", "mode") if c in results.columns]
    rows = []
    for key, group in results.groupby(keys, sort=True):
        key = key if isinstance(key, tuple) else (key,)
        row = dict(zip(keys, key))
        stats = group.set_index("metric")
        for name in METRIC_NAMES:
            label = TABLE_LABELS[name]
            if name in stats.index:
                row[label] = _format_cell(float(stats.at[name, "mean"]), float(stats.at[name, "std"]))
            else:
                row[label] = "--"
        rows.append(row)
    return pd.DataFrame(rows, columns=[*keys, *(TABLE_LABELS[n] for n in METRIC_NAMES)])
