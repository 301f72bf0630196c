"""Penalised mixed-binary relaxation of the water-flow equations.

Every lossy pipe gets a direction binary ``x`` and the signed quadratic
head law is relaxed to two one-sided convex rows gated by a big-M::

    -Mf (1 - x) <= f <= Mf x
    c f^2 - dh <= M (1 - x)          (binding when x = 1)
    c f^2 + dh <= M x                (binding when x = 0)

and each pump's law to ``h_head - h_tail <= lam f^2 + mu f + nu``. The
objective is the sum of absolute pipe head drops minus the pump gains. On
networks whose cycles share no edge the optimum satisfies every relaxed
row with equality, so it solves the original equations.

``M`` is a head (meters). The flow bound ``Mf = sqrt(M / (2c))`` per pipe
is implied by the two head rows, so it adds no extra assumption.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .conic import ConicModel
from .errors import BudgetExceededError, InfeasibleError, InputError, DegeneratePivotError
from .graph import analyze_cycles, fix_noncycle_flows
from .hydraulics import (OffPumpMode, apply_off_pumps, edge_head_change, edge_residuals, make_solution,
                         pressures_from_flows, pump_gain)
from .network import Network, WfInput, WfSolution
from .opt.bnb import BnbNode, Relaxation, branch_and_bound, most_fractional
from .opt.lp import DualSimplex

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class W2Config:
    big_m: float = 300.0
    retry_big_m: float | None = None
    auto_m: bool = False
    head_bound: float = 1e4
    presolve: bool = True
    time_limit: float | None = 60.0
    node_limit: int | None = None
    feas_tol: float = 1e-8
    exact_tol: float = 1e-6
    cuts_per_round: int = 10
    max_oa_rounds: int = 500
    gap_tol: float = 1e-7
    tie_break: bool = True
    heuristic_every: int = 10
    perspective: bool = True

    def __post_init__(self):
        if not self.big_m > 0 or (self.retry_big_m is not None and not self.retry_big_m > 0):
            raise InputError("big-M must be positive")
        if not self.head_bound > 0:
            raise InputError("head bound must be positive")


@dataclass
class QuadRow:
    """``q * z[var]^2 + a.z <= rhs`` with ``q > 0``."""

    tag: str
    edge: int
    var: int
    q: float
    a: np.ndarray
    rhs: float

    def value(self, z):
        return self.q * z[self.var] ** 2 + float(self.a @ z) - self.rhs

    def cut(self, z):
        """Tangent row at ``z``: returns (coefficients, rhs)."""
        v = z[self.var]
        a = self.a.copy()
        a[self.var] += 2.0 * self.q * v
        return a, self.rhs + self.q * v * v

    def seed_cuts(self, lb, ub):
        """Tangents at the ends and middle of the variable's range."""
        lo, hi = lb[self.var], ub[self.var]
        pts = {lo, hi, 0.5 * (lo + hi)}
        if lo < 0 < hi:
            pts |= {0.5 * lo, 0.5 * hi}
        out = []
        for v in sorted(pts):
            z = np.zeros(self.a.size)
            z[self.var] = v
            out.append(self.cut(z))
        return out


@dataclass
class PerspRow:
    """Perspective of one disjunct of a pipe's head law:
    ``c f^2 <= w u`` with ``w = sigma * d`` and ``u = alpha + beta * x``.

    ``sigma = 1, alpha = 0, beta = 1`` is the forward disjunct (``x = 1``),
    ``sigma = -1, alpha = 1, beta = -1`` the reverse one.
    """

    tag: str
    edge: int
    f: int
    d: int
    x: int
    c: float
    sigma: float
    alpha: float
    beta: float
    f_bound: float
    n: int

    def _u(self, z):
        return self.alpha + self.beta * z[self.x]

    def value(self, z):
        u = self._u(z)
        return self.c * z[self.f] ** 2 / max(u, 1e-12) - self.sigma * z[self.d]

    def _row(self, r):
        a = np.zeros(self.n)
        a[self.f] += 2.0 * self.c * r
        a[self.x] -= self.c * r * r * self.beta
        a[self.d] -= self.sigma
        return a, self.c * r * r * self.alpha

    def cut(self, z):
        u = self._u(z)
        if u > 1e-12:
            r = z[self.f] / u
        else:
            r = self.sigma * self.f_bound
        return self._row(float(np.clip(r, -self.f_bound, self.f_bound)))

    def seed_cuts(self, lb, ub):
        return [self._row(self.sigma * self.f_bound * k) for k in (0.125, 0.25, 0.5, 1.0)]


@dataclass
class CompiledW2:
    names: list
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    row_tags: list
    quads: list
    binaries: dict  # edge index -> variable index
    f_idx: np.ndarray
    h_idx: np.ndarray

    def tag_count(self, prefix: str) -> int:
        return sum(t.startswith(prefix) for t in self.row_tags) + \
            sum(q.tag.startswith(prefix) for q in self.quads)


@dataclass
class MipModel:
    """W2 instance on a network whose pumps are all on."""

    net: Network
    d: np.ndarray
    h_r: float
    big_m: float
    head_bound: float = 1e4
    fixed_flows: dict = field(default_factory=dict)  # edge index -> flow
    fixed_dirs: dict = field(default_factory=dict)  # edge index -> 0/1

    def lossy(self) -> list[int]:
        return [p for p in self.net.pipe_indices if not self.net.edges[p].kind.is_lossless]

    def binary_edges(self) -> list[int]:
        return [p for p in self.lossy() if p not in self.fixed_dirs]

    def flow_bounds(self, p: int) -> tuple[float, float]:
        e = self.net.edges[p]
        if p in self.fixed_flows:
            v = self.fixed_flows[p]
            return v, v
        if e.is_pump:
            pump = e.kind
            hi = pump.f_max
            if not np.isfinite(hi):
                # flow at which the gain falls to -M
                disc = pump.mu_bar**2 - 4 * pump.lam * (pump.nu_bar + self.big_m)
                hi = (-pump.mu_bar - np.sqrt(disc)) / (2 * pump.lam)
            return pump.f_min, hi
        if e.kind.is_lossless:
            b = float(np.sum(np.abs(self.d))) + 1.0
            for q in self.net.pump_indices:
                b += self.flow_bounds(q)[1]
            return -b, b
        mf = np.sqrt(self.big_m / (2.0 * e.kind.c))
        if p in self.fixed_dirs:
            return (0.0, mf) if self.fixed_dirs[p] else (-mf, 0.0)
        return -mf, mf

    def compile(self, perspective: bool = False) -> CompiledW2:
        """Dense LP data plus the convex quadratic rows.

        With ``perspective`` every direction binary also gets the convex
        hull of its two disjuncts in a lifted space (split flow and head
        drop per direction). This leaves the optimum unchanged and makes
        the continuous relaxation keep the pipe losses.
        """
        net = self.net
        P, N = net.n_edges, net.n_nodes
        lossy = self.lossy()
        bins = self.binary_edges()
        names = [f"f_{p}" for p in range(P)] + [f"h_{k}" for k in range(N)]
        s_idx = {p: P + N + i for i, p in enumerate(lossy)}
        names += [f"s_{p}" for p in lossy]
        x_idx = {p: P + N + len(lossy) + i for i, p in enumerate(bins)}
        names += [f"x_{p}" for p in bins]
        lift = {}
        if perspective:
            for p in bins:
                base = len(names)
                lift[p] = (base, base + 1, base + 2, base + 3)
                names += [f"f1_{p}", f"f0_{p}", f"d1_{p}", f"d0_{p}"]
        nv = len(names)
        lb = np.empty(nv)
        ub = np.empty(nv)
        for p in range(P):
            lb[p], ub[p] = self.flow_bounds(p)
        H = self.head_bound
        lb[P:P + N], ub[P:P + N] = self.h_r - H, self.h_r + H
        lb[P + net.ref_index] = ub[P + net.ref_index] = self.h_r
        for p, j in s_idx.items():
            lb[j], ub[j] = 0.0, self.big_m
        for p, j in x_idx.items():
            lb[j], ub[j] = 0.0, 1.0
        for p, (f1, f0, d1, d0) in lift.items():
            mf = self.flow_bounds(p)[1]
            lb[f1], ub[f1] = 0.0, mf
            lb[f0], ub[f0] = -mf, 0.0
            lb[d1], ub[d1] = 0.0, self.big_m
            lb[d0], ub[d0] = -self.big_m, 0.0
        c = np.zeros(nv)
        for j in s_idx.values():
            c[j] = 1.0
        for p in net.pump_indices:
            # -(h_head - h_tail)
            c[P + net.heads[p]] -= 1.0
            c[P + net.tails[p]] += 1.0

        rows, lo, hi, tags = [], [], [], []
        quads = []

        def row(coef, l, u, tag):
            a = np.zeros(nv)
            for j, v in coef:
                a[j] += v
            rows.append(a)
            lo.append(l)
            hi.append(u)
            tags.append(tag)

        def dh(p, sign=1.0):
            return [(P + net.tails[p], sign), (P + net.heads[p], -sign)]

        for k in range(N):
            if k == net.ref_index:
                continue
            coef = [(p, 1.0) for p in net.incident(k) if net.tails[p] == k]
            coef += [(p, -1.0) for p in net.incident(k) if net.heads[p] == k]
            row(coef, self.d[k], self.d[k], "mass")
        M = self.big_m
        for p in lossy:
            cp = net.edges[p].kind.c
            s = s_idx[p]
            row(dh(p) + [(s, -1.0)], -np.inf, 0.0, "abs")
            row(dh(p, -1.0) + [(s, -1.0)], -np.inf, 0.0, "abs")
            if p in x_idx:
                x = x_idx[p]
                mf = self.flow_bounds(p)[1]
                row([(p, 1.0), (x, -mf)], -np.inf, 0.0, "dir")
                row([(p, -1.0), (x, mf)], -np.inf, mf, "dir")
                quads.append(_quad(nv, "loss_fwd", p, p, cp, dh(p, -1.0) + [(x, M)], M))
                quads.append(_quad(nv, "loss_rev", p, p, cp, dh(p) + [(x, -M)], 0.0))
                if p in lift:
                    f1, f0, d1, d0 = lift[p]
                    row([(p, 1.0), (f1, -1.0), (f0, -1.0)], 0.0, 0.0, "hull")
                    row(dh(p) + [(d1, -1.0), (d0, -1.0)], 0.0, 0.0, "hull")
                    row([(f1, 1.0), (x, -mf)], -np.inf, 0.0, "hull")
                    row([(f0, -1.0), (x, mf)], -np.inf, mf, "hull")
                    row([(d1, 1.0), (x, -M)], -np.inf, 0.0, "hull")
                    row([(d0, -1.0), (x, M)], -np.inf, M, "hull")
                    row([(s, -1.0), (d1, 1.0), (d0, -1.0)], -np.inf, 0.0, "hull")
                    quads.append(PerspRow("hull1", p, f1, d1, x, cp, 1.0, 0.0, 1.0, mf, nv))
                    quads.append(PerspRow("hull0", p, f0, d0, x, cp, -1.0, 1.0, -1.0, mf, nv))
            else:
                xv = self.fixed_dirs[p]
                fv = self.fixed_flows.get(p)
                if fv is not None:
                    # flow known: both head rows are linear in h
                    row(dh(p), cp * fv * fv - M * (1 - xv), np.inf, "loss_fwd")
                    row(dh(p), -np.inf, M * xv - cp * fv * fv, "loss_rev")
                else:
                    quads.append(_quad(nv, "loss_fwd", p, p, cp, dh(p, -1.0), M * (1 - xv)))
                    quads.append(_quad(nv, "loss_rev", p, p, cp, dh(p), M * xv))
        for p in net.pipe_indices:
            if net.edges[p].kind.is_lossless:
                row(dh(p), 0.0, 0.0, "lossless")
        for p in net.pump_indices:
            pump = net.edges[p].kind
            if p in self.fixed_flows:
                g = float(pump_gain(pump, self.fixed_flows[p]))
                row(dh(p, -1.0), -np.inf, g, "pump")
            else:
                # (h_head - h_tail) - mu f - lam f^2 <= nu
                quads.append(_quad(nv, "pump", p, p, -pump.lam, dh(p, -1.0) + [(p, -pump.mu_bar)],
                                   pump.nu_bar))
        A = np.array(rows) if rows else np.zeros((0, nv))
        return CompiledW2(names, c, lb, ub, A, np.array(lo), np.array(hi), tags, quads, x_idx,
                          np.arange(P), np.arange(P, P + N))

    def to_conic(self) -> ConicModel:
        """Export with ``BIN`` and ``QCUT`` rows."""
        cm = self.compile()
        m = ConicModel()
        m.comments.append(f"W2 big-M {self.big_m!r} nodes {self.net.n_nodes} edges {self.net.n_edges}")
        m.variables = [v for j, v in enumerate(cm.names) if j not in set(cm.binaries.values())]
        m.binaries = [cm.names[j] for j in cm.binaries.values()]
        for j, v in enumerate(cm.names):
            if np.isfinite(cm.lb[j]) and cm.lb[j] == cm.ub[j]:
                m.equalities.append(([(v, 1.0)], float(cm.lb[j])))
                continue
            if np.isfinite(cm.ub[j]):
                m.inequalities.append(([(v, 1.0)], float(cm.ub[j])))
            if np.isfinite(cm.lb[j]):
                m.inequalities.append(([(v, -1.0)], float(-cm.lb[j])))
        for a, l, u in zip(cm.A, cm.row_lo, cm.row_hi):
            terms = [(cm.names[j], float(a[j])) for j in np.flatnonzero(a)]
            if l == u:
                m.equalities.append((terms, float(u)))
                continue
            if np.isfinite(u):
                m.inequalities.append((terms, float(u)))
            if np.isfinite(l):
                m.inequalities.append(([(v, -w) for v, w in terms], float(-l)))
        for q in cm.quads:
            terms = [(cm.names[j], float(q.a[j])) for j in np.flatnonzero(q.a)]
            m.qcuts.append((cm.names[q.var], q.q, terms, q.rhs))
        m.objective = [(cm.names[j], float(cm.c[j])) for j in np.flatnonzero(cm.c)]
        return m


def _quad(nv, tag, edge, var, q, coef, rhs) -> QuadRow:
    a = np.zeros(nv)
    for j, v in coef:
        a[j] += v
    return QuadRow(tag, edge, var, float(q), a, float(rhs))


def auto_big_m(net: Network, d) -> float:
    """``10 * max(flow bound, head range estimate)``."""
    F = 0.5 * float(np.sum(np.abs(d)))
    gain = 0.0
    for p in net.pump_indices:
        pump = net.edges[p].kind
        F += pump.f_max if np.isfinite(pump.f_max) else -pump.mu_bar / (2 * pump.lam)
        gain += float(pump_gain(pump, pump.f_min))
    c = net.coefficients()
    R = gain + (float(np.max(c)) * F * F if c.size else 0.0)
    return 10.0 * max(F, R)


def build_w2(net: Network, inp: WfInput | Sequence[float], M: float = 300.0, h_r: float | None = None,
             head_bound: float = 1e4) -> MipModel:
    """W2 model with one direction binary per lossy pipe. Off pumps must
    already be removed (see :func:`hydraulics.apply_off_pumps`)."""
    if not M > 0:
        raise InputError(f"big-M must be positive, got {M}")
    if isinstance(inp, WfInput):
        inp.check(net)
        d, h_r = np.asarray(inp.injections, dtype=float), inp.reference_pressure
    else:
        d = np.asarray(inp, dtype=float)
        h_r = 0.0 if h_r is None else h_r
        if d.shape != (net.n_nodes,):
            raise InputError(f"expected {net.n_nodes} injections, got {d.shape}")
    if abs(d.sum()) > 1e-8 * max(1.0, float(np.max(np.abs(d))) if d.size else 1.0):
        raise InputError(f"injections do not balance (sum {d.sum():.3e})")
    return MipModel(net, d, float(h_r), float(M), float(head_bound))


def presolve_lemma3(net: Network, d, model: MipModel) -> MipModel:
    """Fix flows (and directions) of all edges outside cycles."""
    fixed = fix_noncycle_flows(net, d)
    flows = dict(model.fixed_flows)
    dirs = dict(model.fixed_dirs)
    for p, v in fixed.items():
        flows[p] = float(v)
        e = net.edges[p]
        if not e.is_pump and not e.kind.is_lossless:
            dirs[p] = 1 if v >= 0 else 0
    return replace(model, fixed_flows=flows, fixed_dirs=dirs)


# ---------------------------------------------------------------------------
# Exactness


@dataclass
class ExactnessReport:
    pipe_gaps: np.ndarray  # |dh| - c f^2 per edge; NaN where not a lossy pipe
    pump_gaps: np.ndarray  # gain(f) - (h_head - h_tail) per edge; NaN elsewhere
    tol: float = 1e-6

    @property
    def max_pipe_gap(self) -> float:
        g = self.pipe_gaps[~np.isnan(self.pipe_gaps)]
        return float(np.max(g)) if g.size else 0.0

    @property
    def max_pump_gap(self) -> float:
        g = self.pump_gaps[~np.isnan(self.pump_gaps)]
        return float(np.max(g)) if g.size else 0.0

    @property
    def max_gap(self) -> float:
        return max(self.max_pipe_gap, self.max_pump_gap)

    @property
    def worst_edge(self) -> int | None:
        g = np.where(np.isnan(self.pipe_gaps), -np.inf, self.pipe_gaps)
        return int(np.argmax(g)) if np.any(np.isfinite(g)) else None

    @property
    def exact(self) -> bool:
        return self.max_gap <= self.tol


def exactness_report(net: Network, sol, tol: float = 1e-6, statuses=None) -> ExactnessReport:
    """Gaps of a relaxation point ``sol`` (a WfSolution or an (f, h) pair)."""
    f, h = (sol.flows, sol.pressures) if isinstance(sol, WfSolution) else sol
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    pipe = np.full(net.n_edges, np.nan)
    pump = np.full(net.n_edges, np.nan)
    for p, e in enumerate(net.edges):
        dh = h[net.tails[p]] - h[net.heads[p]]
        if e.is_pump:
            if statuses is None or statuses.get(e.id, True):
                pump[p] = float(pump_gain(e.kind, f[p])) + dh
        elif not e.kind.is_lossless:
            pipe[p] = abs(dh) - e.kind.c * f[p] ** 2
    return ExactnessReport(pipe, pump, tol)


# ---------------------------------------------------------------------------
# Outer-approximation branch-and-bound


@dataclass
class W2Result:
    f: np.ndarray
    h: np.ndarray
    x: dict
    objective: float
    nodes: int
    elapsed: float
    big_m: float
    lp_rows: int
    cuts: int
    tie_broken: bool = False


class _Solver:
    """Holds the compiled model, the global cut pool and the B&B callbacks.

    A node state is ``(lp, rows)`` where ``rows`` is the set of pool cuts
    already in that LP. Pool cuts enter an LP only once they are violated
    there, which keeps node LPs small.
    """

    def __init__(self, cm: CompiledW2, cfg: W2Config):
        self.cm = cm
        self.cfg = cfg
        self.pool_a: list = []
        self.pool_b: list = []
        self._mat = (0, np.zeros((0, cm.c.size)), np.zeros(0))
        self.incumbent = np.inf
        self.root = DualSimplex(cm.c, cm.A, cm.row_lo, cm.row_hi, cm.lb, cm.ub)
        self._seed_cuts()
        self.bin_vars = sorted(cm.binaries.values())
        self.var_edge = {j: p for p, j in cm.binaries.items()}
        self.heuristic_hits = 0

    def _seed_cuts(self):
        """Initial tangents spread over every nonlinear row's range."""
        cm = self.cm
        for q in cm.quads:
            for a, b in q.seed_cuts(cm.lb, cm.ub):
                self._add_pool(a, b)
        rows = set(range(len(self.pool_a)))
        self._push(self.root, rows, sorted(rows))
        self.root_rows = rows

    @property
    def n_cuts(self) -> int:
        return len(self.pool_a)

    def _add_pool(self, a, b) -> int:
        self.pool_a.append(a)
        self.pool_b.append(b)
        return len(self.pool_a) - 1

    def _matrix(self):
        n, A, b = self._mat
        if n != len(self.pool_a):
            A = np.array(self.pool_a)
            b = np.array(self.pool_b)
            self._mat = (len(self.pool_a), A, b)
        return A, b

    def _push(self, lp: DualSimplex, rows: set, idx) -> None:
        idx = [i for i in idx if i not in rows]
        if not idx:
            return
        A, b = self._matrix()
        lp.add_rows(A[idx], np.full(len(idx), -np.inf), b[idx])
        rows.update(idx)

    def _fresh(self, node: BnbNode) -> tuple[DualSimplex, set]:
        lp = self.root.copy()
        for j, v in node.fixed.items():
            lp.set_bounds(j, float(v), float(v))
        return lp, set(self.root_rows)

    def _violated_pool(self, rows: set, z) -> list:
        A, b = self._matrix()
        if not len(b):
            return []
        v = A @ z - b
        tol = self.cfg.feas_tol
        return [int(i) for i in np.flatnonzero(v > tol) if int(i) not in rows]

    def relax(self, node: BnbNode) -> Relaxation:
        if node.state is None:
            lp, rows = self._fresh(node)
        else:
            lp, rows = node.state
            for j, v in node.fixed.items():
                lp.set_bounds(j, float(v), float(v))
        cfg = self.cfg
        best_viol, stalled = np.inf, 0
        for _round in range(cfg.max_oa_rounds):
            try:
                res = lp.solve()
            except DegeneratePivotError:
                lp, rows = self._fresh(node)
                res = lp.solve()
            if res.status == "infeasible":
                return Relaxation("infeasible")
            if res.status != "optimal":
                raise InfeasibleError(f"W2 relaxation ended with status {res.status}")
            if res.value >= self.incumbent - self._slack():
                return Relaxation("optimal", res.value, None, None)
            z = res.x
            pooled = self._violated_pool(rows, z)
            if pooled:
                self._push(lp, rows, pooled)
                continue
            viol = np.array([q.value(z) for q in self.cm.quads])
            bad = np.flatnonzero(viol > cfg.feas_tol)
            if bad.size == 0:
                return Relaxation("optimal", res.value, z, (lp, rows))
            top = float(viol.max())
            if top < best_viol * (1 - 1e-3):
                best_viol, stalled = top, 0
            else:
                stalled += 1
                if stalled >= 3 and top <= 100 * cfg.feas_tol:
                    # cuts no longer move the LP point: accept at LP precision
                    return Relaxation("optimal", res.value, z, (lp, rows))
            worst = bad[np.argsort(-viol[bad], kind="stable")][:cfg.cuts_per_round]
            new = [self._add_pool(*self.cm.quads[i].cut(z)) for i in worst]
            self._push(lp, rows, new)
        raise InfeasibleError("outer approximation did not reach the feasibility tolerance")

    def _slack(self):
        inc = self.incumbent
        return max(self.cfg.gap_tol, self.cfg.gap_tol * abs(inc)) if np.isfinite(inc) else 0.0

    def branch(self, node: BnbNode, rel: Relaxation, seq):
        z = rel.solution
        free = [j for j in self.bin_vars if j not in node.fixed]
        # ties by edge order: binaries are laid out in edge order
        j = most_fractional(z, free)
        if j is None:
            return None
        lp, rows = rel.state
        p = self.var_edge[j]
        first = 1 if z[p] >= 0 else 0  # follow the relaxed flow direction
        kids = []
        for v, state in ((first, (lp, rows)), (1 - first, (lp.copy(), set(rows)))):
            kids.append(node.child(j, v, seq(), rel.value, state))
        return kids

    def round_directions(self, node: BnbNode, rel: Relaxation):
        """Fix every free direction to the sign of its relaxed flow and
        solve the remaining convex problem."""
        z = rel.solution
        lp, rows = rel.state
        fixed = dict(node.fixed)
        for j in self.bin_vars:
            if j not in fixed:
                fixed[j] = 1 if z[self.var_edge[j]] >= 0 else 0
        trial = BnbNode(rel.value, -1, fixed, node.depth, [], (lp.copy(), set(rows)))
        out = self.relax(trial)
        if out.status != "optimal" or out.solution is None:
            return None
        self.heuristic_hits += 1
        return out.value, out.solution

    def on_incumbent(self, value, z):
        self.incumbent = value


def _solve_model(model: MipModel, cfg: W2Config) -> W2Result:
    cm = model.compile(perspective=cfg.perspective)
    sv = _Solver(cm, cfg)
    t0 = time.perf_counter()
    root = BnbNode(-np.inf, 0)
    out = branch_and_bound(root, sv.relax, sv.branch, sv.on_incumbent, gap_abs=cfg.gap_tol,
                           gap_rel=cfg.gap_tol, node_limit=cfg.node_limit, time_limit=cfg.time_limit,
                           dive=True, heuristic=sv.round_directions, heuristic_every=cfg.heuristic_every)
    elapsed = time.perf_counter() - t0
    if out.status == "infeasible":
        raise InfeasibleError("W2 is infeasible: no direction pattern admits a feasible point")
    z = out.solution
    x = {p: int(round(z[j])) for p, j in cm.binaries.items()}
    x.update(model.fixed_dirs)
    f = z[cm.f_idx].copy()
    h = z[cm.h_idx].copy()
    h[model.net.ref_index] = model.h_r
    return W2Result(f, h, x, out.value, out.nodes, elapsed, model.big_m, cm.A.shape[0], sv.n_cuts)


def _cycle_head_sum(net: Network, cyc, f) -> float:
    """Sum of oriented head changes around a cycle (zero when Kirchhoff's
    voltage law holds)."""
    total = 0.0
    for p in cyc.edges:
        total += cyc.indicator[p] * edge_head_change(net, p, f[p])
    return total


def _circulation_root(net: Network, cyc, f0) -> np.ndarray | None:
    """Flows ``f0 + t n`` on an isolated cycle satisfying its head law.

    The oriented head sum is strictly increasing in ``t`` while pump flows
    stay on the decreasing part of their curves, so the root is unique.
    """
    n = cyc.indicator
    lo, hi = -np.inf, np.inf
    for p in cyc.edges:
        e = net.edges[p]
        if e.is_pump:
            a = (e.kind.f_min - f0[p]) / n[p]
            b = (e.kind.f_max - f0[p]) / n[p]
            lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if lo > hi:
        return None

    def phi(t):
        return _cycle_head_sum(net, cyc, f0 + t * n)

    if not np.isfinite(lo) or not np.isfinite(hi):
        step = 1.0 + float(np.max(np.abs(f0[list(cyc.edges)])))
        lo = lo if np.isfinite(lo) else -step
        hi = hi if np.isfinite(hi) else step
        for _ in range(200):
            grow = False
            if phi(lo) > 0 and not any(net.edges[p].is_pump for p in cyc.edges):
                lo, grow = lo - step, True
            if phi(hi) < 0 and not any(net.edges[p].is_pump for p in cyc.edges):
                hi, grow = hi + step, True
            if not grow:
                break
            step *= 2.0
    a, b = phi(lo), phi(hi)
    if a > 0 or b < 0:
        return None
    if a == 0:
        return f0 + lo * n
    if b == 0:
        return f0 + hi * n
    t = brentq(phi, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return f0 + t * n


def _w2_feasible(model: MipModel, f, h, tol: float) -> bool:
    net = model.net
    if np.max(np.abs(h - model.h_r)) > model.head_bound + tol:
        return False
    for p, e in enumerate(net.edges):
        lo, hi = model.flow_bounds(p)
        if f[p] < lo - tol or f[p] > hi + tol:
            return False
        dh = h[net.tails[p]] - h[net.heads[p]]
        if e.is_pump:
            if -dh > float(pump_gain(e.kind, f[p])) + tol:
                return False
        elif not e.kind.is_lossless:
            if abs(dh) + e.kind.c * f[p] ** 2 > model.big_m + tol:
                return False
    return True


def w2_objective(net: Network, h) -> float:
    """Sum of absolute lossy-pipe head drops minus pump gains."""
    total = 0.0
    for p, e in enumerate(net.edges):
        dh = h[net.tails[p]] - h[net.heads[p]]
        if e.is_pump:
            total += dh
        elif not e.kind.is_lossless:
            total += abs(dh)
    return total


def tie_break(model: MipModel, res: W2Result, tol: float) -> W2Result:
    """Pick a tight point among W2 optima when the relaxation has slack
    only on isolated cycles.

    When every flow on a cycle runs with the cycle's orientation, the
    objective is constant along the circulation and any amount of it is
    optimal. Solving the cycle's head law for the circulation gives the
    tight point; it replaces the B&B point only if it is W2-feasible and no
    worse in objective.
    """
    net = model.net
    rep = exactness_report(net, (res.f, res.h), tol)
    if rep.exact:
        return res
    bad = set(np.flatnonzero(np.nan_to_num(rep.pipe_gaps, nan=-1.0) > tol)) | \
        set(np.flatnonzero(np.nan_to_num(rep.pump_gaps, nan=-1.0) > tol))
    cs = analyze_cycles(net)
    isolated = [cs.cycles[c[0]] for c in cs.clusters() if len(c) == 1]
    f = res.f.copy()
    fixed = set()
    for cyc in isolated:
        if not bad & set(cyc.edges):
            continue
        g = _circulation_root(net, cyc, f)
        if g is None:
            return res
        f = g
        fixed |= set(cyc.edges)
    if not bad <= fixed:
        return res
    h = pressures_from_flows(net, f, model.h_r)
    if np.max(edge_residuals(net, f, h)) > tol or not _w2_feasible(model, f, h, tol):
        return res
    obj = w2_objective(net, h)
    if obj > res.objective + 1e-7 * (1.0 + abs(res.objective)):
        return res
    x = {p: (1 if f[p] >= 0 else 0) for p in res.x}
    return replace(res, f=f, h=h, x=x, objective=obj, tie_broken=True)


def solve_w2(net: Network, inp: WfInput, cfg: W2Config | None = None,
             ) -> tuple[WfSolution, ExactnessReport]:
    """Global W2 optimum by outer-approximation branch-and-bound.

    Off pumps are contracted first. The returned solution has status
    ``"solved"`` when every relaxed row is tight within ``cfg.exact_tol``,
    otherwise ``"inexact"`` (the point still satisfies mass balance and the
    relaxed rows). Budget exhaustion raises :class:`BudgetExceededError`
    unless a retry with ``cfg.retry_big_m`` succeeds.
    """
    cfg = cfg or W2Config()
    inp.check(net)
    red = apply_off_pumps(net, inp, OffPumpMode.CONTRACT)
    rnet = red.network
    rinp = red.reduce_input(inp)
    d = np.asarray(rinp.injections, dtype=float)
    M = auto_big_m(rnet, d) if cfg.auto_m else cfg.big_m
    attempts = [M] + ([cfg.retry_big_m] if cfg.retry_big_m is not None and not cfg.auto_m else [])
    last_exc = None
    res = None
    for i, m in enumerate(attempts):
        model = build_w2(rnet, rinp, m, head_bound=cfg.head_bound)
        if cfg.presolve:
            model = presolve_lemma3(rnet, d, model)
        try:
            res = _solve_model(model, cfg)
            if cfg.tie_break:
                res = tie_break(model, res, cfg.exact_tol)
            break
        except BudgetExceededError as exc:
            last_exc = exc
            log.info("W2 budget exhausted with M=%g", m)
    if res is None:
        raise last_exc
    f, h = red.expand(res.f, res.h, inp.injections)
    report = exactness_report(net, (f, h), cfg.exact_tol, statuses=dict(inp.pump_status))
    status = "solved" if report.exact else "inexact"
    warnings = []
    if not report.exact:
        warnings.append(f"relaxation inexact: max gap {report.max_gap:.3e} m")
    if len(attempts) > 1 and res.big_m != attempts[0]:
        warnings.append(f"solved after retrying with M={res.big_m:g}")
    info = {"nodes": res.nodes, "time": res.elapsed, "big_m": res.big_m, "objective": res.objective,
            "max_gap": report.max_gap, "cuts": res.cuts, "directions": res.x,
            "tie_broken": res.tie_broken}
    sol = make_solution(net, f, h, inp.injections, "miqcqp", statuses=inp, status=status,
                        warnings=warnings, info=info)
    return sol, report
