from __future__ import annotations

from pathlib import Path
import sys

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
PROJECT_SRC = PROJECT_ROOT / "src"
if str(PROJECT_SRC) not in sys.path:
    sys.path.insert(0, str(PROJECT_SRC))

from platoon_glosa.energy import (
    EfficiencyMap,
    EnergyConfig,
    EvParams,
    driving_force,
    efficiency,
    sample_grid,
    step_energy,
)
from platoon_glosa.errors import ConfigurationError


def _make_constant_map(eta: float = 0.9) -> EfficiencyMap:
    return EfficiencyMap.from_grid([0.0, 30.0], [-1000.0, 1000.0], [[eta, eta], [eta, eta]])


def test_force_at_rest_without_rolling_resistance() -> None:
    assert driving_force(0.0, 0.0, EvParams(rolling_coeff=0.0)) == 0.0


def test_force_with_default_parameters() -> None:
    assert driving_force(10.0, 1.0, EvParams()) == pytest.approx(2099.87)


def test_force_balance_root() -> None:
    p = EvParams()
    a = -(p.drag_coeff * 100.0 + p.mass_kg * p.gravity * p.rolling_coeff) / p.mass_kg

    assert driving_force(10.0, a, p) == pytest.approx(0.0, abs=1e-9)


def test_parametric_map_peaks_at_center() -> None:
    eta_map = EfficiencyMap()

    assert efficiency(12.0, 300.0, eta_map) == pytest.approx(0.95)
    assert efficiency(2.0, 50.0, eta_map) < 0.95


def test_constant_table_map() -> None:
    eta_map = EfficiencyMap.from_grid([0.0, 1.0], [0.0, 1.0], [[0.9, 0.9], [0.9, 0.9]])

    assert eta_map(0.3, 0.7) == pytest.approx(0.9)


def test_table_map_is_bilinear() -> None:
    eta_map = EfficiencyMap.from_grid([0.0, 1.0], [0.0, 1.0], [[0.8, 0.9], [0.9, 1.0]])

    assert eta_map(0.5, 0.5) == pytest.approx(0.9)


def test_table_map_clamps_outside_axes() -> None:
    eta_map = EfficiencyMap.from_grid([0.0, 1.0], [0.0, 1.0], [[0.8, 0.9], [0.9, 1.0]])

    assert eta_map(5.0, 5.0) == pytest.approx(1.0)


def test_table_map_validation() -> None:
    with pytest.raises(ConfigurationError):
        EfficiencyMap.from_grid([1.0, 0.0], [0.0, 1.0], [[0.9, 0.9], [0.9, 0.9]])
    with pytest.raises(ConfigurationError):
        EfficiencyMap.from_grid([0.0, 1.0], [0.0, 1.0], [[0.9, 1.2], [0.9, 0.9]])
    with pytest.raises(ConfigurationError):
        EfficiencyMap(mode="lookup")


def test_energy_is_zero_at_standstill() -> None:
    assert step_energy(0.0, 3.0, 0.1, EvParams(), _make_constant_map()) == 0.0


def test_motoring_energy_divides_by_efficiency() -> None:
    energy = step_energy(10.0, 1.0, 0.1, EvParams(), _make_constant_map(0.9))

    assert energy == pytest.approx(2099.87 * 10.0 * 0.1 / 0.9)
    assert energy == pytest.approx(2333.2, abs=0.1)


def test_braking_energy_sign_modes() -> None:
    p = EvParams()
    force = driving_force(10.0, -2.0, p)
    assert force < 0

    literal = step_energy(10.0, -2.0, 0.1, p, _make_constant_map(0.9))
    signed = step_energy(10.0, -2.0, 0.1, p, _make_constant_map(0.9), regen_signed=True)

    assert literal == pytest.approx(abs(force) * 10.0 * 0.1 * 0.9)
    assert signed == pytest.approx(-literal)


def test_energy_config_uses_its_sign_mode() -> None:
    config = EnergyConfig(efficiency=_make_constant_map(), regen_signed=True)

    assert config.step(10.0, -2.0, 0.1) < 0.0
    assert EnergyConfig(efficiency=_make_constant_map()).step(10.0, -2.0, 0.1) > 0.0


def test_export_grid_is_centered_on_the_sweet_spot() -> None:
    speeds, torques, values = sample_grid(EfficiencyMap())

    assert speeds.shape == (50,) and torques.shape == (50,)
    assert values.shape == (50, 50)
    assert speeds[24] == pytest.approx(12.0)
    assert torques[24] == pytest.approx(300.0)
    assert speeds[0] == pytest.approx(0.0, abs=1e-12)


def test_sampled_table_tracks_parametric_map() -> None:
    parametric = EfficiencyMap()
    table = EfficiencyMap.from_grid(*sample_grid(parametric))
    rng = np.random.default_rng(0)

    for v, torque in zip(rng.uniform(0.0, 24.0, 200), rng.uniform(-580.0, 580.0, 200)):
        assert abs(table(v, torque) - parametric(v, torque)) <= 0.01
