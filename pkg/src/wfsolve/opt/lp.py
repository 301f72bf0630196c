"""Bounded-variable dual simplex with a dense explicit basis inverse.

Every row ``lo_i <= a_i.x <= hi_i`` gets a slack ``s_i = a_i.x`` carrying
the row bounds, so the working system is ``[A  -I] (x, s) = 0`` with
bounds on all columns. Starting from the all-slack basis with each
structural at the bound its cost prefers, the basis is dual feasible,
which also holds after tightening bounds or appending rows. That is what
makes warm starts in branch-and-bound and cutting loops cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegeneratePivotError, InputError

BIG = 1e7  # stand-in for an infinite bound of a nonbasic structural
TOL_PRIMAL = 1e-9
TOL_DUAL = 1e-9
TOL_PIVOT = 1e-9
REFACTOR_EVERY = 64


@dataclass
class LpProblem:
    """``min c.x`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``lb <= x <= ub``."""

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).copy()
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise InputError("bound vectors must match the number of variables")
        for a in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(a)):
                raise InputError("LP coefficients must be finite")

    @property
    def n(self) -> int:
        return self.c.size

    def general_form(self):
        """(A, row_lo, row_hi) with all rows stacked."""
        A = np.vstack([self.A_eq, self.A_ub])
        lo = np.concatenate([self.b_eq, np.full(self.b_ub.size, -np.inf)])
        hi = np.concatenate([self.b_eq, self.b_ub])
        return A, lo, hi


def _rows(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != n or A.shape[0] != b.size:
        raise InputError(f"{what} rows have inconsistent dimensions {A.shape} / {b.shape}")
    return A, b


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None = None
    value: float = float("nan")
    duals: np.ndarray | None = None  # one multiplier per row
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class DualSimplex:
    """Stateful solver; keep it around to re-solve after bound changes or
    new rows, or :meth:`copy` it for a branch."""

    def __init__(self, c, A, row_lo, row_hi, lb, ub):
        self.c = np.asarray(c, dtype=float)
        self.n = self.c.size
        self.A = np.array(A, dtype=float).reshape(-1, self.n)
        m = self.A.shape[0]
        self.lo = np.concatenate([np.asarray(lb, dtype=float), np.asarray(row_lo, dtype=float)])
        self.hi = np.concatenate([np.asarray(ub, dtype=float), np.asarray(row_hi, dtype=float)])
        self.cost = np.concatenate([self.c, np.zeros(m)])
        self.basis = np.arange(self.n, self.n + m)
        self.is_basic = np.zeros(self.n + m, dtype=bool)
        self.is_basic[self.basis] = True
        self.x = np.zeros(self.n + m)
        for j in range(self.n):
            self._place(j, self.c[j])
        self.binv = -np.eye(m)
        self.pivots = 0
        self.total_iterations = 0

    @classmethod
    def from_problem(cls, p: LpProblem) -> "DualSimplex":
        A, lo, hi = p.general_form()
        return cls(p.c, A, lo, hi, p.lb, p.ub)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def copy(self) -> "DualSimplex":
        other = object.__new__(DualSimplex)
        other.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v)
                               for k, v in self.__dict__.items()})
        return other

    # -- structure changes -------------------------------------------------

    def _place(self, j, d):
        """Put nonbasic column ``j`` at the bound its reduced cost prefers."""
        lo, hi = self.lo[j], self.hi[j]
        if lo == hi:
            self.x[j] = lo
        elif d >= 0:
            self.x[j] = lo if np.isfinite(lo) else -BIG
        else:
            self.x[j] = hi if np.isfinite(hi) else BIG

    def set_bounds(self, j: int, lo: float, hi: float) -> None:
        self.lo[j], self.hi[j] = lo, hi
        if not self.is_basic[j]:
            d = self._reduced_costs()[j]
            self._place(j, d)

    def add_rows(self, rows, lo, hi) -> None:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        k = rows.shape[0]
        if k == 0:
            return
        m = self.m
        self.A = np.vstack([self.A, rows])
        # new slack columns are appended after the existing ones
        self.lo = np.concatenate([self.lo, np.atleast_1d(lo).astype(float)])
        self.hi = np.concatenate([self.hi, np.atleast_1d(hi).astype(float)])
        self.cost = np.concatenate([self.cost, np.zeros(k)])
        self.x = np.concatenate([self.x, np.zeros(k)])
        self.is_basic = np.concatenate([self.is_basic, np.ones(k, dtype=bool)])
        # new slacks are basic, so B grows to [[B, 0], [R_B, -I]]; its inverse
        # is [[B^-1, 0], [R_B B^-1, -I]] and needs no refactorisation
        rb = np.zeros((k, m))
        structural = self.basis < self.n
        rb[:, structural] = rows[:, self.basis[structural]]
        binv = np.zeros((m + k, m + k))
        binv[:m, :m] = self.binv
        binv[m:, :m] = rb @ self.binv
        binv[m:, m:] = -np.eye(k)
        self.binv = binv
        self.basis = np.concatenate([self.basis, np.arange(self.n + m, self.n + m + k)])

    # -- linear algebra ----------------------------------------------------

    def _column(self, j):
        if j < self.n:
            return self.A[:, j]
        e = np.zeros(self.m)
        e[j - self.n] = -1.0
        return e

    def _basis_matrix(self):
        B = np.zeros((self.m, self.m))
        structural = self.basis < self.n
        B[:, structural] = self.A[:, self.basis[structural]]
        slack_pos = np.flatnonzero(~structural)
        B[self.basis[slack_pos] - self.n, slack_pos] = -1.0
        return B

    def _refactor(self):
        B = self._basis_matrix()
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise DegeneratePivotError("basis matrix is singular", float(np.linalg.cond(B))) from None
        # cheap 1-norm condition estimate
        cond = np.linalg.norm(B, 1) * np.linalg.norm(self.binv, 1) if self.m else 1.0
        if not np.isfinite(cond) or cond > 1e14:
            raise DegeneratePivotError("basis matrix is numerically singular", cond)
        self.pivots = 0

    def _times_full(self, x):
        """``[A -I] x``."""
        return self.A @ x[:self.n] - x[self.n:]

    def _row_of(self, r):
        """Row ``r`` of ``B^-1 [A -I]``."""
        br = self.binv[r]
        return np.concatenate([br @ self.A, -br])

    def _reduced_costs(self):
        y = self.cost[self.basis] @ self.binv
        return self.cost - np.concatenate([y @ self.A, -y])

    def _basic_values(self):
        x = self.x.copy()
        x[self.basis] = 0.0
        self.x[self.basis] = -self.binv @ self._times_full(x)

    # -- main loop ---------------------------------------------------------

    def solve(self, max_iter: int | None = None) -> LpResult:
        if np.any(self.lo > self.hi + TOL_PRIMAL):
            return LpResult("infeasible", iterations=0, info={"reason": "crossed bounds"})
        max_iter = max_iter or 50 * (self.n + self.m) + 1000
        self._basic_values()
        it = 0
        stall, last_obj = 0, -np.inf
        while True:
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            below = lob - xb
            above = xb - hib
            scale = 1.0 + 1e-3 * np.abs(xb)
            viol = np.maximum(below, above)
            infeas = viol > TOL_PRIMAL * scale
            if not np.any(infeas):
                break
            if it >= max_iter:
                return LpResult("iteration_limit", iterations=it)
            if stall > 50:
                # Bland fallback: smallest column index among infeasible rows
                cand = np.flatnonzero(infeas)
                r = int(cand[np.argmin(self.basis[cand])])
            else:
                score = np.where(infeas, viol, -np.inf)
                r = int(np.argmax(score))
            leave = int(self.basis[r])
            to_lower = below[r] > above[r]
            alpha = self._row_of(r)
            d = self._reduced_costs()
            nb = ~self.is_basic
            at_hi = nb & ((self.x >= self.hi) | ((self.hi == np.inf) & (self.x >= BIG))) & (self.lo < self.hi)
            at_lo = nb & ~at_hi & (self.lo < self.hi)
            sgn = 1.0 if to_lower else -1.0
            # eligible columns move x_leave towards the violated bound
            elig = (at_lo & (sgn * alpha < -TOL_PIVOT)) | (at_hi & (sgn * alpha > TOL_PIVOT))
            if not np.any(elig):
                return LpResult("infeasible", iterations=it,
                                info={"row": r, "violation": float(viol[r])})
            idx = np.flatnonzero(elig)
            dd = np.abs(d[idx])
            aa = np.abs(alpha[idx])
            # Harris two-pass ratio test
            theta_max = np.min((dd + TOL_DUAL) / aa)
            ok = dd / aa <= theta_max
            pick = idx[ok]
            best = np.max(np.abs(alpha[pick]))
            q = int(pick[np.flatnonzero(np.abs(alpha[pick]) >= best * (1 - 1e-12))[0]])
            self._pivot(r, leave, q, to_lower)
            it += 1
            obj = float(self.cost @ self.x)
            if obj <= last_obj + 1e-12 * (1 + abs(obj)):
                stall += 1
            else:
                stall = 0
            last_obj = max(last_obj, obj)
        self.total_iterations += it
        return self._result(it)

    def _pivot(self, r, leave, q, to_lower):
        col = self.binv @ self._column(q)
        piv = col[r]
        if abs(piv) < TOL_PIVOT:
            raise DegeneratePivotError("pivot element vanished", np.linalg.cond(self._basis_matrix()))
        self.x[leave] = self.lo[leave] if to_lower else self.hi[leave]
        self.is_basic[leave] = False
        self.is_basic[q] = True
        self.basis[r] = q
        rowr = self.binv[r] / piv
        self.binv -= np.outer(col, rowr)
        self.binv[r] = rowr
        self.pivots += 1
        if self.pivots >= REFACTOR_EVERY:
            self._refactor()
        self._basic_values()

    def _result(self, it) -> LpResult:
        x = self.x[:self.n].copy()
        nb = ~self.is_basic[:self.n]
        artificial = nb & (np.abs(x) >= BIG) & ~(np.isfinite(self.lo[:self.n]) & np.isfinite(self.hi[:self.n]))
        if np.any(artificial):
            return LpResult("unbounded", iterations=it,
                            info={"columns": np.flatnonzero(artificial).tolist()})
        y = self.cost[self.basis] @ self.binv
        return LpResult("optimal", x, float(self.c @ x), y, it)

    def primal_values(self) -> np.ndarray:
        return self.x[:self.n].copy()

    def row_activity(self) -> np.ndarray:
        return self.A @ self.x[:self.n]


def solve_lp(p: LpProblem, max_iter: int | None = None) -> LpResult:
    """Solve ``p`` from scratch (cold start)."""
    return DualSimplex.from_problem(p).solve(max_iter)
