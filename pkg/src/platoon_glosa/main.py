"""Main CLI application for the platoon-glosa simulator and trainer."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv

from . import __version__
from .config import EXTREME, REGULAR, SWEEP_PARAMETERS, GlosaConfig, config_hash, load_config, resolve_seed
from .controllers import ControllerKind
from .data_sources.csv_io import atomic_write_frame
from .data_sources.efficiency_map_csv import load_efficiency_map, write_efficiency_map
from .energy import EfficiencyMap
from .errors import CheckpointError, ConfigurationError, GlosaError, NumericDivergenceError
from .pipelines.benchmark import run_benchmark_matrix, run_single, run_sweep, summarize_table
from .pipelines.episode import write_trajectory_csv
from .pipelines.metrics import compute_metrics
from .pipelines.training import train_controller
from .rl.checkpoint import checkpoint_dir

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4
TRAIN_MODES = ("softsafe", "ce", "selfish", "platoon")


@dataclass
class RunManifest:
    command: str
    version: str = __version__
    status: str = "running"
    config_hash: Optional[str] = None
    seeds: List[int] = field(default_factory=list)
    controller: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    wall_clock_s: Optional[float] = None
    error: Optional[str] = None

    def write(self, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        target = directory / "manifest.json"
        fd, tmp_name = tempfile.mkstemp(prefix=".manifest.", suffix=".tmp", dir=directory)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp_name, target)
        return target


def _load(args: argparse.Namespace, manifest: RunManifest) -> GlosaConfig:
    config = load_config(args.config)
    manifest.config_hash = config_hash(config)
    return config


def _metrics_frame(metrics) -> pd.DataFrame:
    return pd.DataFrame(sorted(metrics.as_dict().items()), columns=["metric", "value"])


def cmd_simulate(args: argparse.Namespace, manifest: RunManifest) -> None:
    """Run one episode and write its trajectory and metrics."""

    config = _load(args, manifest)
    seed = resolve_seed(args.seed, config.scenario.seed)
    config = config.with_seed(seed)
    kind = ControllerKind(args.controller)
    mode = EXTREME if args.extreme else REGULAR
    checkpoints = args.checkpoints or config.eval.checkpoint_root
    manifest.seeds = [seed]
    manifest.controller = kind.value

    episode = run_single(config, kind, mode, checkpoints)
    reference = None
    if not (kind is ControllerKind.PUREHDV and config.scenario.platoon.penetration_rate == 0.0):
        baseline = run_single(config.with_penetration_rate(0.0), ControllerKind.PUREHDV, mode, checkpoints)
        reference = compute_metrics(baseline.trajectory, baseline.corridor).ec_total
    metrics = compute_metrics(episode.trajectory, episode.corridor, reference)

    out = Path(args.out)
    manifest.outputs.append(str(write_trajectory_csv(episode.trajectory, out / "trajectory.csv")))
    manifest.outputs.append(str(atomic_write_frame(_metrics_frame(metrics), out / "metrics.csv")))
    print(
        f"{kind.value} seed {seed} ({mode}): NoC {metrics.noc}, VoR {metrics.vor}, "
        f"AvgV {metrics.avg_v:.2f} m/s, EC {metrics.ec_total:.1f} kJ"
    )


def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> None:
    """Train one RL controller at one penetration rate."""

    config = _load(args, manifest)
    seed = resolve_seed(args.seed, config.scenario.seed)
    config = config.with_seed(seed)
    if args.pr is not None:
        config = config.with_penetration_rate(args.pr)
    kind = ControllerKind.from_train_mode(args.mode)
    manifest.seeds = [seed]
    manifest.controller = kind.value

    out = Path(args.out)
    platoon = config.scenario.platoon
    directory = checkpoint_dir(out / "checkpoints", kind.train_mode, platoon.penetration_rate, platoon.size)
    curve_csv = out / "curves" / f"{directory.name}.csv"
    manifest.outputs.extend([str(directory), str(curve_csv)])
    manifest.write(out)
    result = train_controller(config, kind, checkpoint_dir=directory, curve_csv=curve_csv, epochs=args.epochs)
    means = result.epoch_means()
    summary = f"last epoch mean reward {means[-1]:.3f}" if means else "no epochs run"
    print(f"trained {kind.value} at PR {platoon.penetration_rate:.2f}: {summary}")


def _kinds(values: Optional[Sequence[str]], config: GlosaConfig) -> List[ControllerKind]:
    return [ControllerKind(v) for v in (values or config.eval.kinds)]


def cmd_evaluate(args: argparse.Namespace, manifest: RunManifest) -> None:
    """Run the benchmark matrix and write the long and wide result tables."""

    config = _load(args, manifest)
    kinds = _kinds(args.kinds, config)
    prs = args.prs if args.prs is not None else config.eval.penetration_rates
    seeds = args.seeds if args.seeds is not None else config.eval.seeds
    modes = args.modes or config.eval.modes
    manifest.seeds = [int(s) for s in seeds]
    manifest.controller = ",".join(k.value for k in kinds)

    results = run_benchmark_matrix(
        config,
        kinds,
        prs,
        seeds,
        modes,
        checkpoint_root=args.checkpoints or config.eval.checkpoint_root,
        workers=args.workers or config.eval.workers,
    )
    out = Path(args.out)
    manifest.outputs.append(str(atomic_write_frame(results, out / "results.csv")))
    manifest.outputs.append(str(atomic_write_frame(summarize_table(results), out / "summary.csv")))
    print(f"evaluated {len(kinds)} controllers x {len(prs)} PRs x {len(seeds)} seeds x {len(modes)} modes")


def cmd_sweep(args: argparse.Namespace, manifest: RunManifest) -> None:
    """Sensitivity sweep over communication range or platoon size."""

    config = _load(args, manifest)
    kinds = _kinds(args.kinds, config)
    seeds = args.seeds if args.seeds is not None else config.eval.seeds
    if args.values is not None:
        values = args.values
    elif args.parameter == "communication_range_m":
        values = config.eval.communication_ranges_m
    else:
        values = config.eval.platoon_sizes
    manifest.seeds = [int(s) for s in seeds]
    manifest.controller = ",".join(k.value for k in kinds)

    results = run_sweep(
        config,
        args.parameter,
        values,
        kinds,
        seeds,
        checkpoint_root=args.checkpoints or config.eval.checkpoint_root,
        workers=args.workers or config.eval.workers,
    )
    out = Path(args.out)
    manifest.outputs.append(str(atomic_write_frame(results, out / f"sweep_{args.parameter}.csv")))
    manifest.outputs.append(
        str(atomic_write_frame(summarize_table(results), out / f"sweep_{args.parameter}_summary.csv"))
    )
    print(f"swept {args.parameter} over {len(values)} values")


def cmd_export_map(args: argparse.Namespace, manifest: RunManifest) -> None:
    """Write the active efficiency map on the export grid."""

    eta_map = load_efficiency_map(args.csv) if args.csv else EfficiencyMap()
    out = Path(args.out)
    manifest.outputs.append(str(write_efficiency_map(eta_map, out / "efficiency_map.csv")))
    print(f"efficiency map written to {out / 'efficiency_map.csv'}")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, NumericDivergenceError):
        return EXIT_NUMERIC
    if isinstance(exc, CheckpointError):
        return EXIT_IO
    if isinstance(exc, ConfigurationError):
        return EXIT_USAGE
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERIC if isinstance(exc, ArithmeticError) else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoon-glosa",
        description="Safe speed advisory for mixed CAV/HDV platoons on signalized corridors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
examples:
  platoon-glosa simulate configs/default.yaml --controller purehdv --seed 1
  platoon-glosa train configs/default.yaml --mode platoon --pr 0.4 --epochs 500
  platoon-glosa evaluate configs/default.yaml --kinds purehdv necosa --prs 0 0.4
  platoon-glosa sweep configs/default.yaml --parameter communication_range_m
  platoon-glosa export-map --parametric-defaults --out outputs/map

environment:
  GLOSA_SEED   scenario seed when --seed is not given (a .env file is read)
        """,
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", help="command")

    simulate = subparsers.add_parser("simulate", help="run one episode")
    simulate.add_argument("config", nargs="?", help="YAML config file")
    simulate.add_argument("--controller", required=True, choices=[k.value for k in ControllerKind])
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--extreme", action="store_true", help="inject the brake and red-start bias")
    simulate.add_argument("--checkpoints", help="checkpoint root for RL controllers")
    simulate.add_argument("--out", default="outputs/simulate")

    train = subparsers.add_parser("train", help="train an RL controller")
    train.add_argument("config", nargs="?")
    train.add_argument("--mode", required=True, choices=TRAIN_MODES)
    train.add_argument("--pr", type=float, help="CAV penetration rate")
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--out", default="outputs")

    evaluate = subparsers.add_parser("evaluate", help="run the benchmark matrix")
    evaluate.add_argument("config", nargs="?")
    evaluate.add_argument("--kinds", nargs="+", choices=[k.value for k in ControllerKind])
    evaluate.add_argument("--prs", nargs="+", type=float)
    evaluate.add_argument("--seeds", nargs="+", type=int)
    evaluate.add_argument("--modes", nargs="+", choices=[REGULAR, EXTREME])
    evaluate.add_argument("--workers", type=int)
    evaluate.add_argument("--checkpoints")
    evaluate.add_argument("--out", default="outputs/evaluate")

    sweep = subparsers.add_parser("sweep", help="communication-range or platoon-size sensitivity")
    sweep.add_argument("config", nargs="?")
    sweep.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    sweep.add_argument("--values", nargs="+", type=float)
    sweep.add_argument("--kinds", nargs="+", choices=[k.value for k in ControllerKind])
    sweep.add_argument("--seeds", nargs="+", type=int)
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--checkpoints")
    sweep.add_argument("--out", default="outputs/sweep")

    export = subparsers.add_parser("export-map", help="export the motor efficiency map")
    source = export.add_mutually_exclusive_group(required=True)
    source.add_argument("--parametric-defaults", action="store_true")
    source.add_argument("--csv", help="efficiency-map CSV to re-export")
    export.add_argument("--out", default="outputs/map")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""

    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if not args.command:
        parser.print_help()
        return EXIT_OK

    command_handlers: Dict[str, Callable[[argparse.Namespace, RunManifest], None]] = {
        "simulate": cmd_simulate,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "sweep": cmd_sweep,
        "export-map": cmd_export_map,
    }
    handler = command_handlers[args.command]

    out = Path(args.out)
    manifest = RunManifest(command=args.command)
    started = time.perf_counter()
    code = EXIT_OK
    try:
        manifest.write(out)
        handler(args, manifest)
        manifest.status = "ok"
    except (GlosaError, OSError, ArithmeticError) as exc:
        code = _exit_code(exc)
        manifest.status = "failed"
        manifest.error = str(exc)
        print(f"error: {exc}", file=sys.stderr)
    finally:
        manifest.wall_clock_s = time.perf_counter() - started
        try:
            manifest.write(out)
        except OSError as exc:
            logger.error("could not finalize manifest in %s: %s", out, exc)
            code = code or EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
