"""Configuration helpers for the platoon-glosa project."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, is_dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from .controllers import ControllerKind, PidParams
from .data_sources.efficiency_map_csv import load_efficiency_map
from .dynamics import IdmParams
from .energy import EfficiencyMap, EnergyConfig, EvParams
from .errors import ConfigurationError
from .pipelines.disturbances import DisturbanceSpec, LeaderBrake
from .rl.env import RewardConfig
from .rl.mappo import TrainConfig
from .rl.observation import ObservationScales
from .safety import SafetyContext
from .scenario import CorridorLayout, Limits, PlatoonSpec, ScenarioConfig

SEED_ENV_VAR = "GLOSA_SEED"
REGULAR = "regular"
EXTREME = "extreme"
SWEEP_PARAMETERS = ("communication_range_m", "platoon_size")

# Keys of the ``safety`` section; the rest of SafetyContext comes from the scenario.
SAFETY_KEYS = ("tau", "S0", "B", "alpha_coef", "eps_time")


@dataclass(frozen=True)
class EvalConfig:
    """Benchmark protocol: seeds, penetration rates, controllers and sweeps."""

    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    penetration_rates: Tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    kinds: Tuple[str, ...] = tuple(kind.value for kind in ControllerKind)
    modes: Tuple[str, ...] = (REGULAR, EXTREME)
    workers: int = 1
    checkpoint_root: str = "outputs/checkpoints"
    sweep_penetration_rate: float = 0.4
    communication_ranges_m: Tuple[float, ...] = (100.0, 150.0, 200.0, 250.0, 300.0)
    platoon_sizes: Tuple[int, ...] = (4, 6, 8, 10, 12, 14)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigurationError("eval.seeds must not be empty")
        for pr in self.penetration_rates:
            if not 0.0 <= pr <= 1.0:
                raise ConfigurationError(f"eval.penetration_rates entry {pr} outside [0, 1]")
        for kind in self.kinds:
            try:
                ControllerKind(kind)
            except ValueError as exc:
                raise ConfigurationError(f"eval.kinds: unknown controller {kind!r}") from exc
        for mode in self.modes:
            if mode not in (REGULAR, EXTREME):
                raise ConfigurationError(f"eval.modes: unknown mode {mode!r}")
        if self.workers < 1:
            raise ConfigurationError("eval.workers must be >= 1")


@dataclass(frozen=True)
class ProjectPaths:
    """Centralizes the canonical project directories."""

    root: Path
    configs: Path
    data_raw: Path
    outputs: Path
    checkpoints: Path

    @classmethod
    def from_root(cls, root: Path) -> "ProjectPaths":
        return cls(
            root=root,
            configs=root / "configs",
            data_raw=root / "data" / "raw",
            outputs=root / "outputs",
            checkpoints=root / "outputs" / "checkpoints",
        )


@dataclass(frozen=True)
class GlosaConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    safety: SafetyContext = field(default_factory=SafetyContext)
    reward: RewardConfig = field(default_factory=RewardConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pid: PidParams = field(default_factory=PidParams)
    observation: ObservationScales = field(default_factory=ObservationScales)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def with_seed(self, seed: int) -> "GlosaConfig":
        return replace(self, scenario=replace(self.scenario, seed=int(seed)))

    def with_penetration_rate(self, penetration_rate: float) -> "GlosaConfig":
        platoon = replace(self.scenario.platoon, penetration_rate=float(penetration_rate))
        return replace(self, scenario=replace(self.scenario, platoon=platoon))


def safety_from_scenario(scenario: ScenarioConfig, overrides: Optional[Mapping[str, Any]] = None) -> SafetyContext:
    """SafetyContext sharing the scenario's limits, vehicle length and tick."""

    return SafetyContext(
        L=scenario.vehicle_length_m,
        a_min_mag=scenario.limits.a_min_mag,
        a_max=scenario.limits.a_max,
        v_max=scenario.limits.v_max,
        tick_s=scenario.tick_s,
        **dict(overrides or {}),
    )


_NESTED: Dict[type, Dict[str, type]] = {
    ScenarioConfig: {
        "corridor": CorridorLayout,
        "platoon": PlatoonSpec,
        "limits": Limits,
        "disturbance": DisturbanceSpec,
    },
    DisturbanceSpec: {"leader_brake": LeaderBrake},
    EnergyConfig: {"ev": EvParams, "efficiency": EfficiencyMap},
}


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _build(cls: type, data: Any, dotted: str) -> Any:
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"{dotted} must be a mapping")
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown configuration key {dotted}.{unknown[0]}")
    kwargs = {}
    for key, value in data.items():
        nested = _NESTED.get(cls, {}).get(key)
        if nested is not None and value is not None:
            kwargs[key] = _build(nested, value, f"{dotted}.{key}")
        else:
            kwargs[key] = _freeze(value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{dotted}: {exc}") from exc


def _build_energy(data: Any, base_dir: Path) -> EnergyConfig:
    if not isinstance(data, Mapping):
        raise ConfigurationError("energy must be a mapping")
    data = dict(data)
    csv_path = data.pop("efficiency_csv", None)
    if csv_path is not None and "efficiency" in data:
        raise ConfigurationError("energy.efficiency and energy.efficiency_csv are mutually exclusive")
    energy = _build(EnergyConfig, data, "energy")
    if csv_path is not None:
        path = Path(csv_path)
        if not path.is_absolute():
            path = base_dir / path
        energy = replace(energy, efficiency=load_efficiency_map(path))
    return energy


def config_from_mapping(data: Optional[Mapping[str, Any]], base_dir: Path = Path(".")) -> GlosaConfig:
    """Build a :class:`GlosaConfig` from nested plain data, rejecting unknown keys."""

    data = dict(data or {})
    sections = {f.name for f in fields(GlosaConfig)}
    unknown = sorted(set(data) - sections)
    if unknown:
        raise ConfigurationError(f"unknown configuration key {unknown[0]}")

    scenario = _build(ScenarioConfig, data.get("scenario") or {}, "scenario")
    safety_data = data.get("safety") or {}
    if not isinstance(safety_data, Mapping):
        raise ConfigurationError("safety must be a mapping")
    bad = sorted(set(safety_data) - set(SAFETY_KEYS))
    if bad:
        raise ConfigurationError(f"unknown configuration key safety.{bad[0]}")

    return GlosaConfig(
        scenario=scenario,
        idm=_build(IdmParams, data.get("idm") or {}, "idm"),
        energy=_build_energy(data.get("energy") or {}, base_dir),
        safety=safety_from_scenario(scenario, safety_data),
        reward=_build(RewardConfig, data.get("reward") or {}, "reward"),
        train=_build(TrainConfig, data.get("train") or {}, "train"),
        pid=_build(PidParams, data.get("pid") or {}, "pid"),
        observation=_build(ObservationScales, data.get("observation") or {}, "observation"),
        eval=_build(EvalConfig, data.get("eval") or {}, "eval"),
    )


def load_config(path: Optional[Union[str, Path]]) -> GlosaConfig:
    """Read a YAML config file; ``None`` gives the built-in defaults."""

    if path is None:
        return GlosaConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if data is not None and not isinstance(data, Mapping):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return config_from_mapping(data, base_dir=path.parent)


def _canonical(value: Any) -> Any:
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: _canonical(getattr(value, f.name)) for f in fields(value) if f.init}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, Mapping):
        return {str(k): _canonical(v) for k, v in value.items()}
    return value


def config_hash(config: GlosaConfig) -> str:
    """SHA-256 over the canonical JSON of every configuration field."""

    payload = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve_seed(flag: Optional[int], config_seed: int, environ: Optional[Mapping[str, str]] = None) -> int:
    """``--seed`` beats ``GLOSA_SEED`` beats the config file."""

    if flag is not None:
        return int(flag)
    environ = os.environ if environ is None else environ
    raw = environ.get(SEED_ENV_VAR)
    if raw is not None and raw.strip():
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc
    return int(config_seed)
