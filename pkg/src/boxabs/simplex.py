"""Bounded-variable simplex for the branch-and-bound relaxations.

Two-phase primal simplex on the equality form [A | I] with an explicit basis
inverse, bound-flip pivots, and sparse constraint products (selection
energies have 2-4 nonzeros per row). Entering variables follow Dantzig's rule
until a degenerate streak triggers Bland's rule, which guarantees
termination. Feasibility is verified to 1e-9 at the end; reduced costs use a
1e-7 gate.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .errors import Infeasible, NumericalFailure
from .milp import MilpProblem, Solution

FEAS_TOL = 1e-9
COST_TOL = 1e-7
PIVOT_EPS = 1e-10
REFRESH_EVERY = 150


class _Tableau:
    """Equality system min c x, A x = b, lb <= x <= ub with a slack basis."""

    def __init__(self, A, b, lb, ub):
        self.A = sparse.csc_matrix(A)
        self.At = self.A.T.tocsr()
        self.b = b
        self.lb = lb
        self.ub = ub
        self.m, self.n = A.shape
        self.basis = np.zeros(self.m, dtype=int)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.in_basis = np.zeros(self.n, dtype=bool)
        self.b_inv = np.eye(self.m)
        self.x_basic = np.zeros(self.m)

    def column(self, j: int) -> np.ndarray:
        start, end = self.A.indptr[j], self.A.indptr[j + 1]
        rows = self.A.indices[start:end]
        vals = self.A.data[start:end]
        return self.b_inv[:, rows] @ vals

    def nonbasic_values(self) -> np.ndarray:
        vals = np.where(self.at_upper, self.ub, self.lb)
        vals[self.in_basis] = 0.0
        return vals

    def refresh(self) -> None:
        B = self.A[:, self.basis].toarray()
        try:
            self.b_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis") from exc
        rhs = self.b - self.A @ self.nonbasic_values()
        self.x_basic = self.b_inv @ rhs

    def solution(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.x_basic
        return x

    def minimize(self, cost: np.ndarray, max_iters: int = 50_000) -> None:
        blands = False
        degenerate_streak = 0
        confirmed = False
        for iteration in range(max_iters):
            if iteration and iteration % REFRESH_EVERY == 0:
                self.refresh()
            y = cost[self.basis] @ self.b_inv
            reduced = cost - self.At.dot(y)
            span = self.ub - self.lb

            can_move = ~self.in_basis & (span > 0)
            down = can_move & ~self.at_upper & (reduced < -COST_TOL)
            up = can_move & self.at_upper & (reduced > COST_TOL)
            eligible = np.nonzero(down | up)[0]
            if eligible.size == 0:
                if confirmed:
                    return
                self.refresh()  # re-price once on a fresh inverse
                confirmed = True
                continue
            confirmed = False
            if blands:
                j = int(eligible[0])
            else:
                j = int(eligible[np.argmax(np.abs(reduced[eligible]))])
            sigma = -1.0 if self.at_upper[j] else 1.0

            col = self.column(j)
            delta = sigma * col
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            t = np.full(self.m, np.inf)
            dec = delta > PIVOT_EPS
            t[dec] = np.maximum(self.x_basic[dec] - lbb[dec], 0.0) / delta[dec]
            inc = delta < -PIVOT_EPS
            with np.errstate(invalid="ignore"):
                t[inc] = np.maximum(ubb[inc] - self.x_basic[inc], 0.0) / (-delta[inc])

            t_basic = t.min() if self.m else np.inf
            t_star = min(t_basic, span[j])
            if not np.isfinite(t_star):
                raise NumericalFailure("unbounded relaxation direction")

            if degenerate_streak > 2 * (self.m + self.n):
                blands = True
            degenerate_streak = degenerate_streak + 1 if t_star <= PIVOT_EPS else 0

            if span[j] <= t_basic:
                self.at_upper[j] = ~self.at_upper[j]
                self.x_basic -= sigma * span[j] * col
                continue

            candidates = np.nonzero(t <= t_star + PIVOT_EPS)[0]
            leave_pos = int(candidates[np.argmin(self.basis[candidates])])
            leaving = self.basis[leave_pos]
            entering_value = (self.ub[j] if self.at_upper[j] else self.lb[j]) + sigma * t_star

            self.x_basic -= sigma * t_star * col
            self.x_basic[leave_pos] = entering_value
            self.in_basis[leaving] = False
            self.at_upper[leaving] = delta[leave_pos] < 0  # left at its upper bound
            self.basis[leave_pos] = j
            self.in_basis[j] = True
            self.at_upper[j] = False

            pivot = col[leave_pos]
            if abs(pivot) < PIVOT_EPS:
                self.refresh()
                continue
            row = self.b_inv[leave_pos] / pivot
            self.b_inv -= np.outer(col, row)
            self.b_inv[leave_pos] = row
        raise NumericalFailure("simplex iteration limit reached")


def _standardize(problem: MilpProblem, extra_bounds):
    """Rows to <= / = form with slacks; binaries relaxed to [0, 1]."""
    n = len(problem.variables)
    lb = np.array([v.lower for v in problem.variables], dtype=float)
    ub = np.array([v.upper for v in problem.variables], dtype=float)
    if extra_bounds:
        for idx, (lo, hi) in extra_bounds.items():
            lb[idx] = max(lb[idx], lo)
            ub[idx] = min(ub[idx], hi)
    if np.any(lb > ub + 1e-12):
        raise Infeasible("conflicting variable bounds")
    ub = np.maximum(ub, lb)

    m = len(problem.constraints)
    rows, cols, vals = [], [], []
    b = np.zeros(m)
    slack_ub = np.zeros(m)
    for r, con in enumerate(problem.constraints):
        sign = -1.0 if con.sense == ">=" else 1.0
        for idx, coeff in con.coeffs.items():
            rows.append(r)
            cols.append(idx)
            vals.append(sign * coeff)
        b[r] = sign * con.rhs
        slack_ub[r] = 0.0 if con.sense == "=" else np.inf
        rows.append(r)
        cols.append(n + r)
        vals.append(1.0)
    A = sparse.csc_matrix((vals, (rows, cols)), shape=(m, n + m))
    full_lb = np.concatenate([lb, np.zeros(m)])
    full_ub = np.concatenate([ub, slack_ub])
    return A, b, full_lb, full_ub


def solve_lp(problem: MilpProblem, extra_bounds: dict[int, tuple[float, float]] | None = None,
             ) -> Solution:
    """Optimal solution of the LP relaxation (integrality dropped).

    ``extra_bounds`` narrows variable boxes, which is how branch-and-bound
    fixes binaries. Raises Infeasible or NumericalFailure.
    """
    problem.validate()
    n = len(problem.variables)
    if n == 0:
        return Solution(np.zeros(0), 0.0, "optimal")
    A, b, lb, ub = _standardize(problem, extra_bounds)
    if not np.all(np.isfinite(lb)):
        raise NumericalFailure("variables need finite lower bounds")
    m = A.shape[0]

    cost = np.zeros(A.shape[1])
    for idx, coeff in problem.objective.items():
        cost[idx] = coeff

    if m == 0:
        x = np.where(cost[:n] > 0, lb[:n], np.where(cost[:n] < 0, ub[:n], lb[:n]))
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("unbounded relaxation direction")
        return Solution(x, float(cost[:n] @ x), "optimal")

    # start: structural at lower bound, slacks basic; rows whose slack value
    # would leave its box get an artificial column instead
    residual = b - A @ np.concatenate([lb[:n], np.zeros(m)])
    art_rows = [r for r in range(m)
                if not (-FEAS_TOL <= residual[r] <= ub[n + r] + FEAS_TOL)]

    if art_rows:
        art = sparse.csc_matrix(
            (np.where(residual[art_rows] >= 0, 1.0, -1.0),
             (art_rows, np.arange(len(art_rows)))),
            shape=(m, len(art_rows)))
        A = sparse.hstack([A, art], format="csc")
        lb = np.concatenate([lb, np.zeros(len(art_rows))])
        ub = np.concatenate([ub, np.full(len(art_rows), np.inf)])
        cost = np.concatenate([cost, np.zeros(len(art_rows))])

    tab = _Tableau(A, b, lb, ub)
    art_positions = {r: n + m + k for k, r in enumerate(art_rows)}
    for r in range(m):
        var = art_positions.get(r, n + r)
        tab.basis[r] = var
        tab.in_basis[var] = True
    tab.refresh()

    if art_rows:
        phase1 = np.zeros(A.shape[1])
        phase1[n + m:] = 1.0
        tab.minimize(phase1)
        if float(phase1 @ tab.solution()) > 1e-7:
            raise Infeasible("phase 1 optimum is positive")
        tab.ub[n + m:] = 0.0  # pin artificials at zero for phase 2
        tab.at_upper[n + m:] = False

    tab.minimize(cost)
    tab.refresh()
    x = tab.solution()

    residual = np.abs(A @ x - b)
    if np.any(residual > FEAS_TOL * (1.0 + np.abs(b))):
        raise NumericalFailure("solution violates constraints")
    if np.any(x < lb - 1e-7) or np.any(x > ub + 1e-7):
        raise NumericalFailure("solution violates bounds")

    return Solution(x[:n], float(cost[:n] @ x[:n]), "optimal")
