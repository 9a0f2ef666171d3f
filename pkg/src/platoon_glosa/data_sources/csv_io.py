"""Atomic CSV writing for run artifacts."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Union

import pandas as pd

FLOAT_FORMAT = "%.17g"


def atomic_write_frame(frame: pd.DataFrame, path: Union[str, Path], *, index: bool = False) -> Path:
    """Write ``frame`` to ``path`` through a temporary file and a rename.

    A crash or exception mid-write leaves either the old file or nothing.
    """

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            frame.to_csv(fh, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target
