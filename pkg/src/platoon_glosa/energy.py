"""EV longitudinal force, motor efficiency and per-tick energy consumption."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigurationError

ETA_FLOOR = 0.05
EXPORT_GRID_POINTS = 50


@dataclass(frozen=True)
class EvParams:
    mass_kg: float = 1800.0
    drag_coeff: float = 0.35
    rolling_coeff: float = 0.015
    grade_rad: float = 0.0
    tire_radius_m: float = 0.33
    gravity: float = 9.81

    def __post_init__(self) -> None:
        if not (self.mass_kg > 0 and self.tire_radius_m > 0 and self.gravity > 0):
            raise ConfigurationError("mass, tire radius and gravity must be positive")
        if self.drag_coeff < 0 or self.rolling_coeff < 0:
            raise ConfigurationError("drag and rolling coefficients must be non-negative")


@dataclass(frozen=True)
class EfficiencyMap:
    """Motor efficiency as a function of speed (m/s) and torque (N m).

    ``parametric`` evaluates a Gaussian bump around a sweet spot; ``table``
    interpolates a measured grid bilinearly and clamps queries to its edges.
    """

    mode: str = "parametric"
    peak_eta: float = 0.95
    center_speed: float = 12.0
    center_torque: float = 300.0
    speed_width: float = 10.0
    torque_width: float = 400.0
    speed_axis: Optional[Tuple[float, ...]] = None
    torque_axis: Optional[Tuple[float, ...]] = None
    values: Optional[Tuple[Tuple[float, ...], ...]] = None
    _interpolator: Optional[RegularGridInterpolator] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.mode == "parametric":
            if not ETA_FLOOR < self.peak_eta <= 1.0:
                raise ConfigurationError("peak_eta must lie in (eta_floor, 1]")
            if self.speed_width <= 0 or self.torque_width <= 0:
                raise ConfigurationError("efficiency falloff widths must be positive")
            return
        if self.mode != "table":
            raise ConfigurationError(f"unknown efficiency map mode {self.mode!r}")
        if self.speed_axis is None or self.torque_axis is None or self.values is None:
            raise ConfigurationError("table efficiency map needs axes and values")
        speeds = np.asarray(self.speed_axis, dtype=float)
        torques = np.asarray(self.torque_axis, dtype=float)
        grid = np.asarray(self.values, dtype=float)
        if speeds.size < 2 or torques.size < 2:
            raise ConfigurationError("efficiency table needs at least two points per axis")
        if np.any(np.diff(speeds) <= 0) or np.any(np.diff(torques) <= 0):
            raise ConfigurationError("efficiency table axes must be strictly ascending")
        if grid.shape != (speeds.size, torques.size):
            raise ConfigurationError(f"efficiency table shape {grid.shape} does not match its axes")
        if not np.all(np.isfinite(grid)) or np.any(grid <= 0.0) or np.any(grid > 1.0):
            raise ConfigurationError("efficiency values must lie in (0, 1]")
        interpolator = RegularGridInterpolator((speeds, torques), grid, method="linear")
        object.__setattr__(self, "_interpolator", interpolator)

    @classmethod
    def from_grid(cls, speeds, torques, values) -> "EfficiencyMap":
        return cls(
            mode="table",
            speed_axis=tuple(float(s) for s in speeds),
            torque_axis=tuple(float(q) for q in torques),
            values=tuple(tuple(float(c) for c in row) for row in values),
        )

    def __call__(self, v: float, torque: float) -> float:
        return efficiency(v, torque, self)


def driving_force(v: float, a: float, p: EvParams) -> float:
    return (
        p.mass_kg * a
        + p.drag_coeff * v * v
        + p.mass_kg * p.gravity * p.rolling_coeff * math.cos(p.grade_rad)
        + p.mass_kg * p.gravity * math.sin(p.grade_rad)
    )


def efficiency(v: float, torque: float, eta_map: EfficiencyMap) -> float:
    if eta_map.mode == "parametric":
        exponent = ((v - eta_map.center_speed) / eta_map.speed_width) ** 2 + (
            (abs(torque) - eta_map.center_torque) / eta_map.torque_width
        ) ** 2
        return ETA_FLOOR + (eta_map.peak_eta - ETA_FLOOR) * math.exp(-exponent)

    speeds = eta_map.speed_axis
    torques = eta_map.torque_axis
    if torques[0] >= 0.0:
        # single-quadrant table: generating torque mirrors the motoring side
        torque = abs(torque)
    query = (
        min(max(v, speeds[0]), speeds[-1]),
        min(max(torque, torques[0]), torques[-1]),
    )
    eta = float(eta_map._interpolator([query])[0])
    return max(eta, ETA_FLOOR)


def step_energy(
    v: float,
    a_effective: float,
    dt: float,
    p: EvParams,
    eta_map: EfficiencyMap,
    regen_signed: bool = False,
) -> float:
    """Energy (J) drawn over one tick at speed ``v`` and effective acceleration.

    In the default mode braking energy is counted as a positive cost scaled by
    eta; ``regen_signed`` returns it as a negative (recovered) quantity.
    """

    if dt <= 0:
        raise ConfigurationError("tick must be positive")
    force = driving_force(v, a_effective, p)
    if force == 0.0 or v == 0.0:
        return 0.0
    sign = 1.0 if force > 0 else -1.0
    eta = efficiency(v, force * p.tire_radius_m, eta_map)
    energy = force * v * dt * eta ** (-sign)
    return energy if regen_signed else energy * sign


def _centered_axis(center: float, points: int = EXPORT_GRID_POINTS) -> np.ndarray:
    # centre lands on index points // 2 - 1 and the axis spans [0, ~2 * center]
    mid = points // 2 - 1
    return center + (center / mid) * (np.arange(points) - mid)


def sample_grid(eta_map: EfficiencyMap, points: int = EXPORT_GRID_POINTS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Speed axis, torque axis and efficiency values on an export grid.

    Table maps are sampled on their own axes when they already have the grid
    size, so exporting a loaded export reproduces it exactly.
    """

    if eta_map.mode == "table" and len(eta_map.speed_axis) == points and len(eta_map.torque_axis) == points:
        speeds = np.asarray(eta_map.speed_axis, dtype=float)
        torques = np.asarray(eta_map.torque_axis, dtype=float)
        return speeds, torques, np.asarray(eta_map.values, dtype=float)

    if eta_map.mode == "parametric":
        speeds = _centered_axis(eta_map.center_speed, points)
        torques = _centered_axis(eta_map.center_torque, points)
    else:
        speeds = np.linspace(eta_map.speed_axis[0], eta_map.speed_axis[-1], points)
        torques = np.linspace(eta_map.torque_axis[0], eta_map.torque_axis[-1], points)
    values = np.array([[efficiency(float(v), float(q), eta_map) for q in torques] for v in speeds])
    return speeds, torques, values


@dataclass(frozen=True)
class EnergyConfig:
    ev: EvParams = field(default_factory=EvParams)
    efficiency: EfficiencyMap = field(default_factory=EfficiencyMap)
    regen_signed: bool = False

    def step(self, v: float, a_effective: float, dt: float) -> float:
        return step_energy(v, a_effective, dt, self.ev, self.efficiency, self.regen_signed)
