"""Self-describing ``.npz`` checkpoints for per-agent policy and value nets.

Each file holds a JSON ``header`` (format version, net role, controller
kind, layer widths, activation tags, action box, agent index) and the
parameter arrays ``p0, p1, ...`` in layer order. Loading refuses any file
whose header does not match the layout this package builds.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from ..errors import CheckpointError, ConfigurationError
from .networks import HIDDEN_ACTIVATION, HIDDEN_WIDTHS, OUTPUT_ACTIVATION, Mlp, PolicyNet, ValueNet

CHECKPOINT_VERSION = 1
POLICY = "policy"
VALUE = "value"
_FILE_PATTERN = re.compile(r"^(policy|value)_(\d+)\.npz$")


def checkpoint_dir(root: Path, mode: str, penetration_rate: float, platoon_size: int) -> Path:
    """Directory holding the agent set trained for ``mode`` on one platoon layout."""

    return Path(root) / f"{mode}_pr{int(round(penetration_rate * 100)):03d}_n{int(platoon_size)}"


def _header(role: str, kind: str, agent: int, body: Mlp, a_low: Optional[float], a_high: Optional[float]) -> Dict[str, Any]:
    return {
        "version": CHECKPOINT_VERSION,
        "role": role,
        "kind": kind,
        "agent": int(agent),
        "widths": list(body.widths),
        "hidden_activation": HIDDEN_ACTIVATION,
        "output_activation": OUTPUT_ACTIVATION,
        "a_low": a_low,
        "a_high": a_high,
    }


def _write(path: Path, header: Dict[str, Any], body: Mlp) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"p{k}": p for k, p in enumerate(body.params)}
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.stem}.", suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            np.savez(handle, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _read(path: Path, role: str, kind: Optional[str]) -> Tuple[Dict[str, Any], Mlp]:
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            params = [np.array(data[f"p{k}"]) for k in range(2 * (len(header.get("widths", [])) - 1))]
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc

    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
    if header.get("role") != role:
        raise CheckpointError(f"{path}: expected a {role} net, found {header.get('role')!r}")
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(f"{path}: trained for {header.get('kind')!r}, not {kind!r}")
    if header.get("hidden_activation") != HIDDEN_ACTIVATION or header.get("output_activation") != OUTPUT_ACTIVATION:
        raise CheckpointError(f"{path}: activation tags do not match this network layout")
    widths = tuple(header["widths"])
    if widths[1:-1] != HIDDEN_WIDTHS:
        raise CheckpointError(f"{path}: hidden widths {widths[1:-1]} != {HIDDEN_WIDTHS}")
    try:
        body = Mlp(widths, params)
    except ConfigurationError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return header, body


def save_policy(path: Union[str, Path], net: PolicyNet, *, kind: str, agent: int) -> None:
    _write(Path(path), _header(POLICY, kind, agent, net.body, net.a_low, net.a_high), net.body)


def save_value(path: Union[str, Path], net: ValueNet, *, kind: str, agent: int) -> None:
    _write(Path(path), _header(VALUE, kind, agent, net.body, None, None), net.body)


def load_policy(path: Union[str, Path], *, kind: Optional[str] = None, obs_dim: Optional[int] = None) -> PolicyNet:
    header, body = _read(Path(path), POLICY, kind)
    if obs_dim is not None and body.widths[0] != obs_dim:
        raise CheckpointError(f"{path}: input width {body.widths[0]} != observation size {obs_dim}")
    try:
        return PolicyNet(body.widths[0], header["a_low"], header["a_high"], body)
    except (ConfigurationError, TypeError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc


def load_value(path: Union[str, Path], *, kind: Optional[str] = None, state_dim: Optional[int] = None) -> ValueNet:
    _, body = _read(Path(path), VALUE, kind)
    if state_dim is not None and body.widths[0] != state_dim:
        raise CheckpointError(f"{path}: input width {body.widths[0]} != state size {state_dim}")
    try:
        return ValueNet(body.widths[0], body)
    except ConfigurationError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc


def save_agent_set(
    directory: Union[str, Path],
    policies: Mapping[int, PolicyNet],
    values: Mapping[int, ValueNet],
    *,
    kind: str,
) -> None:
    directory = Path(directory)
    for i, net in policies.items():
        save_policy(directory / f"policy_{i}.npz", net, kind=kind, agent=i)
    for i, net in values.items():
        save_value(directory / f"value_{i}.npz", net, kind=kind, agent=i)


def load_policy_set(
    directory: Union[str, Path],
    *,
    kind: Optional[str] = None,
    obs_dim: Optional[int] = None,
) -> Dict[int, PolicyNet]:
    """All policies in ``directory`` keyed by agent (vehicle) index."""

    directory = Path(directory)
    if not directory.is_dir():
        raise CheckpointError(f"checkpoint directory not found: {directory}")
    policies: Dict[int, PolicyNet] = {}
    for path in sorted(directory.iterdir()):
        match = _FILE_PATTERN.match(path.name)
        if match is None or match.group(1) != POLICY:
            continue
        policies[int(match.group(2))] = load_policy(path, kind=kind, obs_dim=obs_dim)
    if not policies:
        raise CheckpointError(f"no policy checkpoints in {directory}")
    return policies
