"""Strict reader and writer for tabulated motor-efficiency maps.

Layout: the header row holds the torque axis (N m, ascending) after a
free-text corner cell, the first column holds the speed axis (m/s,
ascending) and every other cell is an efficiency in (0, 1].
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..energy import EfficiencyMap, sample_grid
from ..errors import MapFormatError
from .csv_io import atomic_write_frame

CORNER_LABEL = "speed_mps\\torque_nm"


def load_efficiency_map(path: Union[str, Path]) -> EfficiencyMap:
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise MapFormatError(f"cannot parse efficiency map {path}: {exc}") from exc
    return parse_efficiency_rows(raw.values.tolist())


def parse_efficiency_rows(rows: Sequence[Sequence[str]]) -> EfficiencyMap:
    """Build a table map from raw string cells; row/col in errors are 1-based."""

    if len(rows) < 3:
        raise MapFormatError("efficiency map needs a header row and at least two speed rows")
    header = rows[0]
    if len(header) < 3:
        raise MapFormatError("efficiency map needs at least two torque columns", row=1)

    torques = [_require_float(cell, row=1, col=j + 1) for j, cell in enumerate(header) if j > 0]
    _require_ascending(torques, row=1, axis="torque")

    speeds: List[float] = []
    values: List[List[float]] = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MapFormatError(f"expected {len(header)} cells, found {len(row)}", row=i)
        speeds.append(_require_float(row[0], row=i, col=1))
        cells = []
        for j, cell in enumerate(row[1:], start=2):
            eta = _require_float(cell, row=i, col=j)
            if not 0.0 < eta <= 1.0:
                raise MapFormatError(f"efficiency {eta} outside (0, 1]", row=i, col=j)
            cells.append(eta)
        values.append(cells)

    _require_ascending(speeds, col=1, axis="speed")
    return EfficiencyMap.from_grid(speeds, torques, values)


def write_efficiency_map(eta_map: EfficiencyMap, path: Union[str, Path]) -> Path:
    speeds, torques, values = sample_grid(eta_map)
    frame = pd.DataFrame(values, columns=[repr(float(q)) for q in torques])
    frame.insert(0, CORNER_LABEL, speeds)
    return atomic_write_frame(frame, path)


def _coerce_float(value: Optional[str]) -> Optional[float]:
    if value is None:
        return None
    text = str(value).strip()
    if not text:
        return None
    try:
        number = float(text)
    except ValueError:
        return None
    if math.isnan(number) or math.isinf(number):
        return None
    return number


def _require_float(value: Optional[str], *, row: int, col: int) -> float:
    number = _coerce_float(value)
    if number is None:
        raise MapFormatError(f"expected a finite number, found {value!r}", row=row, col=col)
    return number


def _require_ascending(axis_values: Sequence[float], *, axis: str, row: Optional[int] = None, col: Optional[int] = None) -> None:
    diffs = np.diff(np.asarray(axis_values, dtype=float))
    bad = np.flatnonzero(diffs <= 0)
    if bad.size:
        position = int(bad[0]) + 2
        if row is not None:
            raise MapFormatError(f"{axis} axis is not strictly ascending", row=row, col=position + 1)
        raise MapFormatError(f"{axis} axis is not strictly ascending", row=position + 1, col=col)
