from __future__ import annotations

from pathlib import Path
import sys

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
PROJECT_SRC = PROJECT_ROOT / "src"
if str(PROJECT_SRC) not in sys.path:
    sys.path.insert(0, str(PROJECT_SRC))

from platoon_glosa.diffqp import QpProblem, kkt_jacobian, safe_action_gradient, solve_active_set
from platoon_glosa.dynamics import VehicleState
from platoon_glosa.errors import ConfigurationError
from platoon_glosa.safety import CbfConstraint, SafetyContext, assemble_branch_qp, solve_branch


def _make_box_qp(ahat: float, a_max: float = 4.0, a_min: float = 4.0) -> QpProblem:
    G = np.array([[1.0], [-1.0]])
    b = np.array([a_max, a_min])
    return QpProblem(Q=[[2.0]], G=G, F=b - G[:, 0] * ahat, dF=-G[:, 0], ahat=ahat)


def _make_planar_qp(ahat: float) -> QpProblem:
    F0 = np.array([-1.0, 2.0, 3.0])
    dF = np.array([-1.0, 0.5, 0.0])
    return QpProblem(
        Q=[[2.0, 0.5], [0.5, 1.0]],
        G=[[1.0, 1.0], [1.0, -1.0], [-1.0, 0.0]],
        F=F0 + dF * ahat,
        dF=dF,
        ahat=ahat,
    )


def test_interior_optimum_has_no_active_rows() -> None:
    sol = solve_active_set(_make_box_qp(1.0))

    assert sol.feasible
    assert sol.u_star[0] == pytest.approx(0.0)
    assert np.all(sol.lambda_star == 0.0)
    assert sol.active_set == ()


def test_single_binding_row() -> None:
    qp = QpProblem(Q=[[2.0]], G=[[1.0]], F=[-2.0], dF=[0.0])

    sol = solve_active_set(qp)

    assert sol.u_star[0] == pytest.approx(-2.0)
    assert sol.lambda_star[0] == pytest.approx(4.0)
    assert sol.active_set == (0,)


def test_infeasible_problem_is_reported() -> None:
    qp = QpProblem(Q=[[2.0]], G=[[1.0], [-1.0]], F=[-2.0, -2.0], dF=[0.0, 0.0])

    sol = solve_active_set(qp)

    assert not sol.feasible
    with pytest.raises(ConfigurationError):
        kkt_jacobian(sol, qp)


def test_gradient_is_one_when_nothing_binds() -> None:
    qp = _make_box_qp(1.0)

    factor, degenerate = safe_action_gradient(solve_active_set(qp), qp)

    assert factor == pytest.approx(1.0)
    assert not degenerate


def test_gradient_is_zero_on_the_box_face() -> None:
    qp = _make_box_qp(6.0)
    sol = solve_active_set(qp)

    derivative = kkt_jacobian(sol, qp)
    factor, _ = safe_action_gradient(sol, qp)

    assert derivative.du_dahat[0] == pytest.approx(-1.0)
    assert factor == pytest.approx(0.0, abs=1e-12)


def test_gradient_is_zero_when_a_barrier_row_pins_the_action() -> None:
    ego = VehicleState(x=0.0, v=10.0)
    ctx = SafetyContext()
    row = CbfConstraint(coeff=1.8, bound=-3.0, sense="<=", tag="cf")
    qp = assemble_branch_qp(0.5, [row], ego, ctx)

    factor, _ = safe_action_gradient(solve_active_set(qp), qp)

    assert factor == pytest.approx(0.0, abs=1e-12)


def test_weakly_active_row_is_flagged() -> None:
    qp = _make_box_qp(4.0)

    factor, degenerate = safe_action_gradient(solve_active_set(qp), qp)

    assert degenerate
    assert factor == pytest.approx(1.0)


def test_jacobian_matches_finite_differences() -> None:
    h = 1e-5
    qp = _make_planar_qp(0.0)
    sol = solve_active_set(qp)
    assert sol.active_set == (0,)

    derivative = kkt_jacobian(sol, qp)
    plus = solve_active_set(_make_planar_qp(h)).u_star
    minus = solve_active_set(_make_planar_qp(-h)).u_star
    numeric = (plus - minus) / (2 * h)

    np.testing.assert_allclose(derivative.du_dahat, numeric, rtol=1e-4, atol=1e-8)
    assert not derivative.degenerate


def _make_random_qp(rng: np.random.Generator):
    n = int(rng.integers(1, 3))
    root = rng.normal(size=(n, n))
    Q = root @ root.T + n * np.eye(n)
    m = int(rng.integers(1, 5))
    G = rng.normal(size=(m, n))
    F0 = rng.normal(scale=2.0, size=m)
    dF = rng.normal(size=m)
    return lambda ahat: QpProblem(Q=Q, G=G, F=F0 + dF * ahat, dF=dF, ahat=ahat)


def test_jacobian_matches_finite_differences_on_random_problems() -> None:
    rng = np.random.default_rng(17)
    h = 1e-5
    checked = flagged = 0
    for _ in range(50_000):
        if checked == 1000:
            break
        make = _make_random_qp(rng)
        ahat = float(rng.uniform(-3.0, 3.0))
        qp = make(ahat)
        sol = solve_active_set(qp)
        if not sol.feasible:
            continue
        derivative = kkt_jacobian(sol, qp)
        if derivative.degenerate:
            flagged += 1
            continue
        plus, minus = solve_active_set(make(ahat + h)), solve_active_set(make(ahat - h))
        if not (plus.feasible and minus.feasible) or plus.active_set != minus.active_set:
            # a breakpoint inside the stencil
            continue

        numeric = (plus.u_star - minus.u_star) / (2 * h)

        np.testing.assert_allclose(derivative.du_dahat, numeric, rtol=1e-4, atol=1e-6)
        checked += 1
    assert checked == 1000


def test_degenerate_vertex_is_flagged_not_differentiated() -> None:
    # two rows meet exactly at the unconstrained optimum
    qp = QpProblem(Q=[[2.0, 0.0], [0.0, 2.0]], G=[[1.0, 0.0], [0.0, 1.0]], F=[0.0, 0.0], dF=[1.0, 1.0])

    derivative = kkt_jacobian(solve_active_set(qp), qp)

    assert derivative.degenerate
    assert np.all(np.isfinite(derivative.du_dahat))


def test_interval_solver_matches_active_set_solver() -> None:
    rng = np.random.default_rng(7)
    ctx = SafetyContext()
    agreements = 0
    for _ in range(10_000):
        ego = VehicleState(x=0.0, v=float(rng.uniform(0.0, 18.0)))
        rows = [
            CbfConstraint(
                coeff=float(rng.normal()),
                bound=float(rng.normal(scale=3.0)),
                sense="<=" if rng.random() < 0.5 else ">=",
            )
            for _ in range(int(rng.integers(0, 4)))
        ]
        ahat = float(rng.uniform(-6.0, 6.0))
        qp = assemble_branch_qp(ahat, rows, ego, ctx)

        interval = solve_branch(qp, ahat)
        exact = solve_active_set(qp)

        assert (interval is not None) == exact.feasible
        if interval is not None:
            assert interval.objective == pytest.approx(exact.objective, abs=1e-9)
            assert interval.a_safe == pytest.approx(ahat + exact.u_star[0], abs=1e-9)
            agreements += 1
    assert agreements > 2000


def test_qp_problem_validation() -> None:
    with pytest.raises(ConfigurationError):
        QpProblem(Q=[[0.0]], G=[[1.0]], F=[1.0], dF=[0.0])
    with pytest.raises(ConfigurationError):
        QpProblem(Q=[[2.0]], G=[[1.0], [1.0]], F=[1.0], dF=[0.0])
