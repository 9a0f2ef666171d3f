"""Safety, efficiency and energy metrics computed from an episode trajectory."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np
import pandas as pd

from ..errors import ConfigurationError
from ..scenario import RED, CorridorSpec
from ..simulator import crossing_time
from .episode import Trajectory

TTC_CLOSING_FLOOR = 0.0
T2TL_SPEED_FLOOR = 0.1

# Column order of the summary tables.
METRIC_NAMES = (
    "dist2pv_min",
    "ttc_min",
    "noc",
    "dist2tl_min",
    "t2tl_min",
    "vor",
    "avg_v",
    "t2p",
    "ec_total",
    "delta_ec",
    "imp",
)


@dataclass(frozen=True)
class EpisodeMetrics:
    dist2pv_min: float
    ttc_min: float
    noc: int
    dist2tl_min: float
    t2tl_min: float
    vor: int
    avg_v: float
    t2p: float
    ec_total: float
    delta_ec: float = math.nan
    imp: float = math.nan
    dist2tl_present: bool = False
    fallbacks: int = 0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _evaluated(frame: pd.DataFrame) -> pd.DataFrame:
    cavs = frame[frame["kind"] == "cav"]
    return cavs if len(cavs) else frame


def _count_onsets(frame: pd.DataFrame) -> int:
    noc = 0
    for _, rows in frame.groupby("vehicle", sort=True):
        overlap = (rows.sort_values("tick")["gap_net"].to_numpy() < 0.0).astype(int)
        noc += int(overlap[0]) + int(np.sum(np.diff(overlap) == 1))
    return noc


def _ttc_min(frame: pd.DataFrame, evaluated: pd.DataFrame) -> float:
    speeds = frame.pivot(index="tick", columns="vehicle", values="v")
    best = math.inf
    for vehicle, rows in evaluated.groupby("vehicle"):
        if vehicle == 0:
            continue
        ticks = rows["tick"].to_numpy()
        closing = rows["v"].to_numpy() - speeds.loc[ticks, vehicle - 1].to_numpy()
        gaps = np.maximum(rows["gap_net"].to_numpy(), 0.0)
        approaching = closing > TTC_CLOSING_FLOOR
        if approaching.any():
            best = min(best, float(np.min(gaps[approaching] / closing[approaching])))
    return best


def _red_violations(frame: pd.DataFrame, corridor: CorridorSpec, tick_s: float) -> int:
    vor = 0
    for _, rows in frame.groupby("vehicle"):
        rows = rows.sort_values("tick")
        x = rows["x"].to_numpy()
        t = rows["t"].to_numpy()
        for signal in corridor.signals:
            line = signal.position_m
            for k in np.flatnonzero((x[:-1] < line) & (line <= x[1:])):
                when = crossing_time(x[k], x[k + 1], line, t[k], tick_s)
                if when is not None and signal.phase_at(when).indication == RED:
                    vor += 1
    return vor


def compute_metrics(
    trajectory: Trajectory,
    corridor: CorridorSpec,
    reference_ec: Optional[float] = None,
) -> EpisodeMetrics:
    """Metrics of one episode.

    Controller-facing minima and counts cover CAV rows only, or every vehicle
    when the platoon has no CAVs. ``corridor`` must be the ground-truth
    timing. ``reference_ec`` (kJ) is the PureHDV energy of the same seed.
    """

    frame = trajectory.frame
    if "ec_j" not in frame.columns or frame["ec_j"].isna().any():
        raise ConfigurationError("trajectory has no complete per-vehicle energy channel")
    evaluated = _evaluated(frame)

    gaps = evaluated["gap_net"].dropna()
    dist2pv = float(gaps.min()) if len(gaps) else math.nan

    positions = np.array([s.position_m for s in corridor.signals])
    red = evaluated[(evaluated["indication"] == RED) & (evaluated["nearest_signal"] >= 0)]
    present = bool(len(red))
    if present:
        distance = positions[red["nearest_signal"].to_numpy(dtype=int)] - red["x"].to_numpy()
        dist2tl = float(distance.min())
        t2tl = float(np.min(distance / np.maximum(red["v"].to_numpy(), T2TL_SPEED_FLOOR)))
    else:
        dist2tl = t2tl = 0.0

    last = corridor.last_stop_line_m
    passed = frame.groupby("tick").agg(x_min=("x", "min"), t=("t", "first"))
    passed = passed[passed["x_min"] >= last]
    t2p = float(passed["t"].iloc[0]) if len(passed) else math.nan

    ec_total = float(frame["ec_j"].sum()) / 1000.0
    if reference_ec is None:
        delta_ec = imp = math.nan
    else:
        delta_ec = ec_total - reference_ec
        imp = -delta_ec / reference_ec * 100.0 if reference_ec != 0 else math.nan

    return EpisodeMetrics(
        dist2pv_min=dist2pv,
        ttc_min=_ttc_min(frame, evaluated),
        noc=_count_onsets(evaluated[evaluated["vehicle"] > 0]),
        dist2tl_min=dist2tl,
        t2tl_min=t2tl,
        vor=_red_violations(evaluated, corridor, trajectory.tick_s),
        avg_v=float(frame["v"].mean()),
        t2p=t2p,
        ec_total=ec_total,
        delta_ec=delta_ec,
        imp=imp,
        dist2tl_present=present,
        fallbacks=int((evaluated["branch"] == "fallback").sum()),
    )
