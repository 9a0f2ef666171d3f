"""Small dense QP solved by active-set enumeration, differentiated through its KKT system.

The problem is posed in deviation form::

    minimize    1/2 u' Q u
    subject to  G u <= F(ahat)

where ``u = a - ahat``. Every right-hand side is affine in ``ahat`` and the
problem stores both its value and its derivative ``dF/dahat``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError

FEASIBILITY_TOL = 1e-9
DUAL_TOL = 1e-12


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    G: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    ahat: float = 0.0
    tags: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        G = np.asarray(self.G, dtype=float).reshape(-1, n)
        F = np.asarray(self.F, dtype=float).reshape(-1)
        dF = np.asarray(self.dF, dtype=float).reshape(-1)
        if Q.shape != (n, n):
            raise ConfigurationError("Q must be square")
        if np.any(np.linalg.eigvalsh(0.5 * (Q + Q.T)) <= 0):
            raise ConfigurationError("Q must be positive definite")
        if not (G.shape[0] == F.size == dF.size):
            raise ConfigurationError("G, F and dF must have one entry per constraint row")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(dF))):
            raise ConfigurationError("constraint rows and their derivatives must be finite")
        if self.tags and len(self.tags) != G.shape[0]:
            raise ConfigurationError("one tag per constraint row")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "dF", dF)

    @property
    def n_vars(self) -> int:
        return self.Q.shape[0]

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    def row_tolerance(self) -> np.ndarray:
        return FEASIBILITY_TOL * np.maximum(1.0, np.abs(self.F))


@dataclass(frozen=True)
class QpSolution:
    u_star: np.ndarray
    lambda_star: np.ndarray
    active_set: Tuple[int, ...]
    objective: float
    feasible: bool = True

    @classmethod
    def infeasible(cls, qp: QpProblem) -> "QpSolution":
        return cls(
            u_star=np.full(qp.n_vars, np.nan),
            lambda_star=np.zeros(qp.n_rows),
            active_set=(),
            objective=float("inf"),
            feasible=False,
        )


@dataclass(frozen=True)
class KktDerivative:
    du_dahat: np.ndarray
    dlambda_dahat: np.ndarray
    degenerate: bool = False


def _solve_equality(qp: QpProblem, rows: Tuple[int, ...]) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    n = qp.n_vars
    if not rows:
        return np.zeros(n), np.zeros(0)
    G_act = qp.G[list(rows)]
    k = len(rows)
    kkt = np.block([[qp.Q, G_act.T], [G_act, np.zeros((k, k))]])
    rhs = np.concatenate([np.zeros(n), qp.F[list(rows)]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:n], sol[n:]


def solve_active_set(qp: QpProblem) -> QpSolution:
    """Exact optimum by enumerating every candidate active set.

    Candidates are all row subsets of size at most the primal dimension; the
    feasible candidate with non-negative duals and the lowest objective wins.
    """

    tol = qp.row_tolerance()
    best: Optional[QpSolution] = None
    max_active = min(qp.n_vars, qp.n_rows)
    for size in range(max_active + 1):
        for rows in combinations(range(qp.n_rows), size):
            solved = _solve_equality(qp, rows)
            if solved is None:
                continue
            u, lam_active = solved
            if np.any(lam_active < -DUAL_TOL):
                continue
            if np.any(qp.G @ u - qp.F > tol):
                continue
            objective = 0.5 * float(u @ qp.Q @ u)
            if best is not None and objective >= best.objective - 1e-15:
                continue
            lam = np.zeros(qp.n_rows)
            lam[list(rows)] = np.maximum(lam_active, 0.0)
            active = tuple(int(j) for j in np.flatnonzero(lam > DUAL_TOL))
            best = QpSolution(u_star=u, lambda_star=lam, active_set=active, objective=objective)
    return best if best is not None else QpSolution.infeasible(qp)


def kkt_jacobian(sol: QpSolution, qp: QpProblem) -> KktDerivative:
    """Differentiate the optimum with respect to ``ahat``.

    Solves the linearized stationarity and complementary-slackness system.
    Rows that are binding with a zero multiplier make the system singular;
    they are treated as inactive and reported through ``degenerate``.
    """

    if not sol.feasible:
        raise ConfigurationError("cannot differentiate an infeasible QP")
    n, m = qp.n_vars, qp.n_rows
    lam = sol.lambda_star
    slack = qp.G @ sol.u_star - qp.F
    weak = (np.abs(slack) <= qp.row_tolerance()) & (lam <= DUAL_TOL)

    top = np.hstack([qp.Q, qp.G.T])
    bottom = np.hstack([lam[:, None] * qp.G, np.diag(slack)])
    bottom[weak] = 0.0
    bottom[weak, n + np.flatnonzero(weak)] = 1.0
    kkt = np.vstack([top, bottom])
    rhs = np.concatenate([np.zeros(n), lam * qp.dF])

    degenerate = bool(np.any(weak))
    try:
        delta = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        delta = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        degenerate = True
    return KktDerivative(du_dahat=delta[:n], dlambda_dahat=delta[n:], degenerate=degenerate)


def safe_action_gradient(sol: QpSolution, qp: QpProblem) -> Tuple[float, bool]:
    """``d a_safe / d ahat`` for a scalar problem, with the degeneracy flag."""

    if qp.n_vars != 1:
        raise ConfigurationError("safe_action_gradient expects a scalar decision variable")
    derivative = kkt_jacobian(sol, qp)
    return 1.0 + float(derivative.du_dahat[0]), derivative.degenerate
