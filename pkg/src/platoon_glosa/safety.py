"""Barrier-function safety filter for CAV accelerations.

Every barrier condition is linear in the ego acceleration, so each branch of
the filter is a one-dimensional QP whose feasible set is an interval. The
filter builds the car-following row, the speed-limit and box rows and the
rows of one of two signal-passing branches:

* ``scenario1``: pass the next stop line during the current green, at least
  ``B`` seconds before the red starts;
* ``scenario2``: wait for the next green window, arriving after it opens and
  at least ``B`` seconds before it closes.

The branch with the lower objective ``(a - ahat)^2`` wins. When neither
window can be met, the ``relaxed`` branch keeps every row except the
arrival deadlines, so a vehicle still approaches without running the red.
Full braking is the last resort.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

from .diffqp import QpProblem, QpSolution, safe_action_gradient
from .dynamics import VehicleState
from .errors import ConfigurationError
from .scenario import GREEN, CorridorSpec, PhaseView

logger = logging.getLogger(__name__)

INFEASIBILITY_TOL = 1e-9

BRANCH_SCENARIO1 = "scenario1"
BRANCH_SCENARIO2 = "scenario2"
BRANCH_NO_SIGNAL = "no-signal"
BRANCH_RELAXED = "relaxed"
BRANCH_FALLBACK = "fallback"

# Arrival-deadline rows; every other row bounds safety and is never relaxed.
RELAXABLE_TAGS = ("tl1", "tl2-lower")


@dataclass(frozen=True)
class SafetyContext:
    tau: float = 1.8
    L: float = 5.0
    S0: float = 2.0
    a_min_mag: float = 4.0
    a_max: float = 4.0
    v_max: float = 18.0
    B: float = 1.8
    alpha_coef: float = 1.0
    eps_time: float = 0.2
    tick_s: float = 0.1

    def __post_init__(self) -> None:
        for name in ("tau", "L", "S0", "a_min_mag", "a_max", "v_max", "B", "alpha_coef", "eps_time", "tick_s"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"SafetyContext.{name} must be strictly positive")


@dataclass(frozen=True)
class CbfConstraint:
    """``coeff * a (sense) bound`` for the ego acceleration ``a``."""

    coeff: float
    bound: float
    sense: str = "<="
    tag: str = ""

    def __post_init__(self) -> None:
        if self.sense not in ("<=", ">="):
            raise ConfigurationError(f"unknown constraint sense {self.sense!r}")
        if not math.isfinite(self.coeff):
            raise ConfigurationError("constraint coefficient must be finite")

    def as_upper(self) -> Tuple[float, float]:
        """Same row written as ``g * a <= b``."""

        if self.sense == "<=":
            return self.coeff, self.bound
        return -self.coeff, -self.bound

    def admits(self, a: float, tol: float = INFEASIBILITY_TOL) -> bool:
        g, b = self.as_upper()
        return g * a <= b + tol * max(1.0, abs(b))


@dataclass(frozen=True)
class SafeFilterResult:
    a_safe: float
    branch: str
    objective: float
    active_constraints: Tuple[str, ...] = ()
    solution: Optional[QpSolution] = None
    qp: Optional[QpProblem] = None
    constraints: Tuple[CbfConstraint, ...] = field(default=(), repr=False)

    @property
    def fallback(self) -> bool:
        return self.branch == BRANCH_FALLBACK

    def gradient_factor(self) -> Tuple[float, bool]:
        """``d a_safe / d ahat`` and whether the active set was degenerate."""

        if self.solution is None or self.qp is None:
            return 0.0, False
        return safe_action_gradient(self.solution, self.qp)


def h1_value(ego: VehicleState, leader: VehicleState, ctx: SafetyContext) -> float:
    closing = ego.v - leader.v
    s_dec = closing * closing / (2.0 * ctx.a_min_mag) if closing >= 0 else 0.0
    return leader.x - ego.x - ctx.tau * ego.v - ctx.L - ctx.S0 - s_dec


def car_following_constraint(ego: VehicleState, leader: VehicleState, ctx: SafetyContext) -> CbfConstraint:
    v_r = leader.v - ego.v
    h1 = h1_value(ego, leader, ctx)
    coeff = ctx.tau - v_r / ctx.a_min_mag if ego.v >= leader.v else ctx.tau
    return CbfConstraint(coeff=coeff, bound=ctx.alpha_coef * h1 + v_r, sense="<=", tag="cf")


def scenario1_constraint(
    ego: VehicleState,
    view: PhaseView,
    p_k: float,
    t: float,
    ctx: SafetyContext,
) -> Optional[CbfConstraint]:
    """Pass during the current green; ``None`` when that is not an option."""

    if view.indication != GREEN or ego.x > p_k:
        return None
    horizon = view.next_red_start_s - t - ctx.B
    if not horizon > ctx.eps_time or math.isinf(horizon):
        return None
    distance = p_k - ego.x
    h2 = ego.v - distance / horizon
    bound = (distance - ego.v * horizon) / horizon**2 - ctx.alpha_coef * h2
    return CbfConstraint(coeff=1.0, bound=bound, sense=">=", tag="tl1")


def scenario2_constraints(
    ego: VehicleState,
    view: PhaseView,
    p_k: float,
    t: float,
    ctx: SafetyContext,
) -> Tuple[Optional[CbfConstraint], Optional[CbfConstraint]]:
    """Speed window for arriving during the next green window.

    A guarded-out denominator drops only its own row. Inside the red guard
    window the upper row becomes a one-tick stop-line row.
    """

    if ego.x > p_k:
        return None, None
    distance = p_k - ego.x

    upper: Optional[CbfConstraint] = None
    to_green = view.upcoming_green_start_s - t
    if to_green > ctx.eps_time and math.isfinite(to_green):
        h21 = distance / to_green - ego.v
        bound = (distance - ego.v * to_green) / to_green**2 + ctx.alpha_coef * h21
        upper = CbfConstraint(coeff=1.0, bound=bound, sense="<=", tag="tl2-upper")
    elif view.indication != GREEN:
        dt = ctx.tick_s
        upper = CbfConstraint(coeff=1.0, bound=(distance - ego.v * dt) / dt**2, sense="<=", tag="tl2-upper")

    lower: Optional[CbfConstraint] = None
    to_close = view.upcoming_green_end_s - t - ctx.B
    if to_close > ctx.eps_time and math.isfinite(to_close):
        h22 = ego.v - distance / to_close
        bound = (distance - ego.v * to_close) / to_close**2 - ctx.alpha_coef * h22
        lower = CbfConstraint(coeff=1.0, bound=bound, sense=">=", tag="tl2-lower")
    return upper, lower


def assemble_branch_qp(
    ahat: float,
    constraints: Sequence[CbfConstraint],
    ego: VehicleState,
    ctx: SafetyContext,
) -> QpProblem:
    """Matrix form in ``u = a - ahat`` with the speed-limit and box rows added."""

    rows: List[CbfConstraint] = [
        CbfConstraint(coeff=ctx.tick_s, bound=ctx.v_max - ego.v, sense="<=", tag="speed-limit"),
        *constraints,
        CbfConstraint(coeff=1.0, bound=ctx.a_max, sense="<=", tag="box"),
        CbfConstraint(coeff=1.0, bound=-ctx.a_min_mag, sense=">=", tag="box"),
    ]
    G = np.empty((len(rows), 1))
    b = np.empty(len(rows))
    for j, row in enumerate(rows):
        G[j, 0], b[j] = row.as_upper()
    return QpProblem(
        Q=np.array([[2.0]]),
        G=G,
        F=b - G[:, 0] * ahat,
        dF=-G[:, 0],
        ahat=float(ahat),
        tags=tuple(row.tag for row in rows),
    )


def solve_branch(qp: QpProblem, ahat: float, branch: str = BRANCH_NO_SIGNAL) -> Optional[SafeFilterResult]:
    """Closed-form interval solution; ``None`` when the branch is infeasible."""

    g = qp.G[:, 0]
    b = qp.F + g * ahat
    lo, hi = -math.inf, math.inf
    lo_row = hi_row = -1
    for j, (gj, bj) in enumerate(zip(g, b)):
        if gj > 0:
            if bj / gj < hi:
                hi, hi_row = bj / gj, j
        elif gj < 0:
            if bj / gj > lo:
                lo, lo_row = bj / gj, j
        elif bj < -INFEASIBILITY_TOL:
            return None
    if lo > hi + INFEASIBILITY_TOL:
        return None

    a_safe = min(max(ahat, lo), hi)
    u = a_safe - ahat
    lam = np.zeros(qp.n_rows)
    if u > 0:
        lam[lo_row] = 2.0 * abs(u) / abs(g[lo_row])
    elif u < 0:
        lam[hi_row] = 2.0 * abs(u) / abs(g[hi_row])
    active = tuple(int(j) for j in np.flatnonzero(lam > 0))
    solution = QpSolution(
        u_star=np.array([u]),
        lambda_star=lam,
        active_set=active,
        objective=u * u,
    )
    return SafeFilterResult(
        a_safe=a_safe,
        branch=branch,
        objective=u * u,
        active_constraints=tuple(qp.tags[j] for j in active),
        solution=solution,
        qp=qp,
    )


def _solve_rows(
    ahat: float,
    rows: Sequence[CbfConstraint],
    ego: VehicleState,
    ctx: SafetyContext,
    branch: str,
) -> Optional[SafeFilterResult]:
    qp = assemble_branch_qp(ahat, rows, ego, ctx)
    result = solve_branch(qp, ahat, branch)
    if result is None:
        return None
    return SafeFilterResult(
        a_safe=result.a_safe,
        branch=result.branch,
        objective=result.objective,
        active_constraints=result.active_constraints,
        solution=result.solution,
        qp=result.qp,
        constraints=tuple(rows),
    )


def filter_action(
    ahat: float,
    ego: VehicleState,
    leader: Optional[VehicleState],
    corridor: CorridorSpec,
    t: float,
    ctx: SafetyContext,
    *,
    sensing_range_m: float = math.inf,
    vehicle_index: Optional[int] = None,
) -> SafeFilterResult:
    """Project ``ahat`` onto the admissible set of the better signal branch.

    ``corridor`` is the timing the vehicle believes, which may differ from the
    ground truth under a red-start bias. A signal farther than
    ``sensing_range_m`` is not seen and the no-signal branch applies.
    """

    common: List[CbfConstraint] = []
    if leader is not None:
        common.append(car_following_constraint(ego, leader, ctx))

    signal = corridor.next_signal(ego.x)
    if signal is not None and signal.position_m - ego.x > sensing_range_m:
        signal = None

    if signal is None:
        result = _solve_rows(ahat, common, ego, ctx, BRANCH_NO_SIGNAL)
    else:
        view = signal.phase_at(t)
        candidates: List[SafeFilterResult] = []
        row1 = scenario1_constraint(ego, view, signal.position_m, t, ctx)
        if row1 is not None:
            first = _solve_rows(ahat, common + [row1], ego, ctx, BRANCH_SCENARIO1)
            if first is not None:
                candidates.append(first)
        upper, lower = scenario2_constraints(ego, view, signal.position_m, t, ctx)
        rows2 = common + [row for row in (upper, lower) if row is not None]
        second = _solve_rows(ahat, rows2, ego, ctx, BRANCH_SCENARIO2)
        if second is not None:
            candidates.append(second)
        # min keeps the first of equal objectives, so scenario 1 wins ties
        result = min(candidates, key=lambda r: r.objective) if candidates else None
        if result is None:
            # neither arrival window is reachable: keep the stop-line and
            # car-following rows and drop only the arrival deadlines
            hard = [row for row in rows2 if row.tag not in RELAXABLE_TAGS]
            result = _solve_rows(ahat, hard, ego, ctx, BRANCH_RELAXED)

    if result is not None:
        return result

    logger.debug("safety filter infeasible for vehicle %s at t=%.2f s", vehicle_index, t)
    a_safe = -ctx.a_min_mag
    return SafeFilterResult(a_safe=a_safe, branch=BRANCH_FALLBACK, objective=(a_safe - ahat) ** 2)


class FallbackTracker:
    """Warns once when a vehicle enters the full-braking fallback, not on every tick of it."""

    def __init__(self) -> None:
        self._active: Set[int] = set()

    def update(self, vehicle_index: int, t: float, result: SafeFilterResult, ctx: SafetyContext) -> bool:
        """Record one filter result; returns True when a new fallback stretch starts."""

        if not result.fallback:
            self._active.discard(vehicle_index)
            return False
        if vehicle_index in self._active:
            return False
        self._active.add(vehicle_index)
        logger.warning(
            "safety filter infeasible for vehicle %s at t=%.2f s; braking at %.1f m/s^2",
            vehicle_index,
            t,
            ctx.a_min_mag,
        )
        return True

    @property
    def active(self) -> Tuple[int, ...]:
        return tuple(sorted(self._active))
