#!/usr/bin/env python3
"""Entry-point for training every RL controller and rebuilding the result tables."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
PROJECT_SRC = PROJECT_ROOT / "src"
if str(PROJECT_SRC) not in sys.path:
    sys.path.insert(0, str(PROJECT_SRC))

from platoon_glosa.config import ProjectPaths, load_config
from platoon_glosa.controllers import ControllerKind
from platoon_glosa.data_sources.csv_io import atomic_write_frame
from platoon_glosa.pipelines.benchmark import run_benchmark_matrix, run_sweep, summarize_table
from platoon_glosa.pipelines.training import train_controller
from platoon_glosa.rl.checkpoint import checkpoint_dir


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--project-root",
        default=PROJECT_ROOT,
        type=Path,
        help="Project root for locating configs and outputs",
    )
    parser.add_argument("--config", default=None, type=Path, help="YAML config (defaults to configs/default.yaml)")
    parser.add_argument("--epochs", type=int, default=None, help="Override the training epoch count")
    parser.add_argument("--skip-training", action="store_true", help="Reuse checkpoints already on disk")
    parser.add_argument("--skip-sweeps", action="store_true", help="Only rebuild the penetration-rate tables")
    return parser.parse_args()


def _train_all(config, paths: ProjectPaths, epochs) -> None:
    for pr in config.eval.penetration_rates:
        cfg = config.with_penetration_rate(pr)
        platoon = cfg.scenario.platoon
        for kind in ControllerKind:
            if not kind.is_rl or kind.value not in config.eval.kinds:
                continue
            directory = checkpoint_dir(paths.checkpoints, kind.train_mode, pr, platoon.size)
            curve = paths.outputs / "curves" / f"{directory.name}.csv"
            print(f"training {kind.value} at PR {pr:.2f}")
            train_controller(cfg, kind, checkpoint_dir=directory, curve_csv=curve, epochs=epochs)


def main() -> None:
    args = parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    paths = ProjectPaths.from_root(args.project_root)
    config = load_config(args.config or paths.configs / "default.yaml")

    if not args.skip_training:
        _train_all(config, paths, args.epochs)

    kinds = [ControllerKind(k) for k in config.eval.kinds]
    prs = (0.0, *config.eval.penetration_rates)
    results = run_benchmark_matrix(
        config,
        kinds,
        prs,
        config.eval.seeds,
        config.eval.modes,
        checkpoint_root=paths.checkpoints,
        workers=config.eval.workers,
    )
    atomic_write_frame(results, paths.outputs / "tables" / "benchmark.csv")
    atomic_write_frame(summarize_table(results), paths.outputs / "tables" / "benchmark_summary.csv")

    if not args.skip_sweeps:
        for parameter, values in (
            ("communication_range_m", config.eval.communication_ranges_m),
            ("platoon_size", config.eval.platoon_sizes),
        ):
            sweep = run_sweep(
                config,
                parameter,
                values,
                kinds,
                config.eval.seeds,
                checkpoint_root=paths.checkpoints,
                workers=config.eval.workers,
            )
            atomic_write_frame(summarize_table(sweep), paths.outputs / "tables" / f"sweep_{parameter}.csv")

    print(f"tables written to {paths.outputs / 'tables'}")


if __name__ == "__main__":
    main()
