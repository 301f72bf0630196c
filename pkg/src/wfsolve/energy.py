"""Energy-function solvers for networks without pumps.

Two first-order schemes are provided. :func:`solve_dual_decomposition`
runs dual ascent on the flow formulation: per-pipe closed-form primal
updates followed by a multiplier step on the mass-balance residual; the
converged multipliers are the nodal heads up to a shift.
:func:`solve_gradient_pressure` minimises the unconstrained head
formulation directly with a backtracking line search.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conic import ConicModel
from .errors import InputError, NonConvergenceError, UnsupportedNetworkError
from .hydraulics import make_solution
from .network import Network, WfSolution, balance_tolerance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by the energy solvers.

    ``tol_primal`` bounds the max-norm mass residual (m^3/hr) for dual
    decomposition; ``tol_grad`` bounds the same residual relative to
    ``max(1, max|d|)`` for the head formulation. ``auto_scale`` rescales
    the dual step by ``max_p c_p F^(rho-1) / 5e-3`` (F the mean nonzero
    |d|), which is about 1 on metric networks with m^3/hr flows, so the
    default step carries over to other unit systems. ``metric`` picks the
    inner product for the head-formulation steps: plain ``euclidean``, the
    ``diagonal`` of the local curvature, or the full weighted Laplacian
    (``hessian``) with slopes capped where flows vanish.
    """

    step_size: float = 1e-4
    max_iters: int = 20000
    tol_primal: float = 1e-4
    tol_grad: float = 1e-9
    acceleration: str = "none"
    metric: str = "hessian"
    auto_scale: bool = False
    safeguard: bool = True
    record_history: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise InputError("step size must be positive")
        if not (self.tol_primal > 0 and self.tol_grad > 0):
            raise InputError("tolerances must be positive")
        if self.acceleration not in ("none", "momentum"):
            raise InputError(f"unknown acceleration {self.acceleration!r}")
        if self.metric not in ("euclidean", "diagonal", "hessian"):
            raise InputError(f"unknown metric {self.metric!r}")
        if self.max_iters < 1:
            raise InputError("max_iters must be at least 1")


class _Pipes:
    """Vectorised view of a pump-free network."""

    def __init__(self, net: Network, rho):
        if net.has_pumps:
            raise UnsupportedNetworkError("energy-function solvers require a network without pumps")
        self.net = net
        self.t = np.asarray(net.tails)
        self.h = np.asarray(net.heads)
        self.c = net.coefficients()
        if np.any(self.c <= 0):
            raise InputError("energy-function solvers need strictly lossy pipes")
        self.rho = net.exponents() if rho is None else np.full(net.n_edges, float(rho))
        self.inv_rho = 1.0 / self.rho
        self.n = net.n_nodes

    def diff(self, x):
        return x[self.t] - x[self.h]

    def flows(self, delta):
        return np.sign(delta) * (np.abs(delta) / self.c) ** self.inv_rho

    def outflow(self, f):
        """``A^T f``."""
        return np.bincount(self.t, f, self.n) - np.bincount(self.h, f, self.n)

    def potential(self, delta):
        """Sum of rho/(rho+1) |delta|^((rho+1)/rho) / c^(1/rho)."""
        e = (self.rho + 1.0) / self.rho
        return float(np.sum(self.rho / (self.rho + 1.0) * np.abs(delta) ** e / self.c ** self.inv_rho))

    def scale(self, d):
        """(flow scale, head scale) of the problem."""
        F = max(float(np.max(np.abs(d))), 1e-12) if d.size else 1.0
        H = float(np.max(self.c * F ** self.rho)) if self.c.size else 1.0
        return F, H


def energy_value(net: Network, f: Sequence[float], rho: float | None = None) -> float:
    """``sum_p c_p |f_p|^(rho+1) / (rho+1)``."""
    pipes = _Pipes(net, rho)
    f = np.asarray(f, dtype=float)
    if f.shape != (net.n_edges,):
        raise InputError(f"expected {net.n_edges} flows, got {f.shape}")
    return float(np.sum(pipes.c * np.abs(f) ** (pipes.rho + 1.0) / (pipes.rho + 1.0)))


def _check(net: Network, d):
    d = np.asarray(d, dtype=float)
    if d.shape != (net.n_nodes,):
        raise InputError(f"expected {net.n_nodes} injections, got {d.shape}")
    if abs(d.sum()) > balance_tolerance(d):
        raise InputError(f"injections do not balance (sum {d.sum():.3e})")
    return d


def _trivial(net: Network, d, h_r, tag):
    f = np.zeros(net.n_edges)
    h = np.full(net.n_nodes, float(h_r))
    return make_solution(net, f, h, d, tag, info={"iterations": 0})


def solve_dual_decomposition(net: Network, d: Sequence[float], h_r: float = 0.0, rho: float | None = None,
                             cfg: SolverConfig | None = None, xi0: Sequence[float] | None = None,
                             ) -> WfSolution:
    """Dual ascent on the constrained energy problem.

    Each iteration sets every pipe flow to its Lagrangian minimiser
    ``sign(a_p.xi) (|a_p.xi| / c_p)^(1/rho)`` and moves the multipliers
    along ``d - A^T f``. The dual gradient is not Lipschitz near zero head
    differences, so with ``safeguard`` on a step is rejected and halved when
    the local Lipschitz estimate ``|dr| / |dxi|`` exceeds ``1/step``, then
    regrown by 2% per accepted step up to the configured size. The test
    uses gradients only: dual values cancel badly near the optimum.
    ``acceleration="momentum"`` restarts whenever the gradient opposes the
    last move.
    """
    cfg = cfg or SolverConfig()
    d = _check(net, d)
    pipes = _Pipes(net, rho)
    if net.n_edges == 0:
        return _trivial(net, d, h_r, "energy-dual")
    mu = cfg.step_size
    if cfg.auto_scale:
        nz = np.abs(d[d != 0])
        F = float(nz.mean()) if nz.size else 1.0
        mu *= float(np.max(pipes.c * F ** (pipes.rho - 1.0))) / 5e-3
    xi = np.zeros(net.n_nodes) if xi0 is None else np.array(xi0, dtype=float)
    xi -= xi.mean()

    def dual(x):
        delta = pipes.diff(x)
        f = pipes.flows(delta)
        return f, d - pipes.outflow(f), float(d @ x) - pipes.potential(delta)

    f, r, q = dual(xi)
    history = [q] if cfg.record_history else None
    momentum = cfg.acceleration == "momentum"
    mu0 = mu
    y, ry, theta = xi, r, 1.0
    halvings = 0
    k = 0
    for k in range(1, cfg.max_iters + 1):
        if np.max(np.abs(r)) <= cfg.tol_primal:
            k -= 1
            break
        base, g = (y, ry) if momentum else (xi, r)
        cand = base + mu * g
        cand -= cand.mean()
        fc, rc, qc = dual(cand)
        if cfg.safeguard:
            if mu * np.linalg.norm(rc - g) > np.linalg.norm(cand - base):
                mu *= 0.5
                halvings += 1
                continue
            mu = min(1.02 * mu, mu0)
        restart = g @ (cand - xi) < 0
        xi_prev, xi = xi, cand
        f, r, q = fc, rc, qc
        if history is not None:
            history.append(q)
        if momentum:
            theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            beta = 0.0 if restart else (theta - 1.0) / theta_next
            theta = 1.0 if restart else theta_next
            if beta == 0.0:
                y, ry = xi, r
            else:
                y = xi + beta * (xi - xi_prev)
                _, ry, _ = dual(y)
    else:
        k = cfg.max_iters
    res = float(np.max(np.abs(r)))
    if res > cfg.tol_primal:
        raise NonConvergenceError("dual decomposition did not converge", res, k)
    h = xi - xi[net.ref_index] + h_r
    info = {"iterations": k, "step": mu, "halvings": halvings}
    if history is not None:
        info["dual_history"] = history
    return make_solution(net, f, h, d, "energy-dual", info=info)


def solve_gradient_pressure(net: Network, d: Sequence[float], h_r: float = 0.0, rho: float | None = None,
                            cfg: SolverConfig | None = None, h0: Sequence[float] | None = None,
                            ) -> WfSolution:
    """Minimise the unconstrained head potential
    ``sum rho/(rho+1) |a_p.h|^((rho+1)/rho) / c_p^(1/rho) - d.h``.

    The gradient is ``A^T f(h) - d``. Each step moves along the gradient
    measured in ``cfg.metric`` with the length set by Armijo backtracking
    (the gradient is not Lipschitz near zero head differences);
    ``acceleration="momentum"`` adds Nesterov extrapolation with
    function-value restarts. The minimiser is shifted to match ``h_r`` and
    flows follow from the head laws.
    """
    cfg = cfg or SolverConfig()
    d = _check(net, d)
    pipes = _Pipes(net, rho)
    if net.n_edges == 0:
        return _trivial(net, d, h_r, "energy-gradient")
    F, H = pipes.scale(d)
    tol = cfg.tol_grad * max(1.0, float(np.max(np.abs(d))))
    h = np.full(net.n_nodes, float(h_r)) if h0 is None else np.array(h0, dtype=float)
    floor = 1e-6 * F
    deg = np.bincount(pipes.t, minlength=pipes.n) + np.bincount(pipes.h, minlength=pipes.n)

    def evaluate(x):
        delta = pipes.diff(x)
        f = pipes.flows(delta)
        return pipes.potential(delta) - float(d @ x), pipes.outflow(f) - d, f

    def scaled(g, f):
        if cfg.metric == "euclidean":
            return g * (H / F)
        # edge weights df/ddelta, capped where the flow vanishes
        w = 1.0 / (pipes.rho * pipes.c * np.maximum(np.abs(f), floor) ** (pipes.rho - 1.0))
        if cfg.metric == "diagonal":
            diag = np.bincount(pipes.t, w, pipes.n) + np.bincount(pipes.h, w, pipes.n)
            return g / np.where(deg > 0, diag, 1.0)
        lap = np.zeros((pipes.n, pipes.n))
        np.add.at(lap, (pipes.t, pipes.t), w)
        np.add.at(lap, (pipes.h, pipes.h), w)
        np.add.at(lap, (pipes.t, pipes.h), -w)
        np.add.at(lap, (pipes.h, pipes.t), -w)
        keep = np.arange(pipes.n) != net.ref_index
        out = np.zeros(pipes.n)
        out[keep] = np.linalg.solve(lap[np.ix_(keep, keep)], g[keep])
        return out

    val, g, f = evaluate(h)
    momentum = cfg.acceleration == "momentum"
    y, vy, gy, fy = h.copy(), val, g.copy(), f
    theta = 1.0
    t = 1.0
    k = 0
    history = [val] if cfg.record_history else None
    for k in range(1, cfg.max_iters + 1):
        if np.max(np.abs(g)) <= tol:
            k -= 1
            break
        base, vbase, gbase, fbase = (y, vy, gy, fy) if momentum else (h, val, g, f)
        step = scaled(gbase, fbase)
        slope = float(gbase @ step)
        t = min(1.0, 2.0 * t)
        while True:
            cand = base - t * step
            vc, gc, fc = evaluate(cand)
            if vc <= vbase - 0.5 * t * slope or t < 1e-12:
                break
            # near the optimum the decrease drowns in rounding; accept on gradient
            if abs(vc - vbase) <= 1e-13 * (abs(vbase) + 1.0) and np.max(np.abs(gc)) < np.max(np.abs(gbase)):
                break
            t *= 0.5
        if momentum and vc > val:
            # restart: the extrapolated point lost ground
            y, vy, gy, fy, theta = h.copy(), val, g.copy(), f, 1.0
            continue
        h_prev = h
        h, val, g, f = cand, vc, gc, fc
        if history is not None:
            history.append(val)
        if momentum:
            theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            y = h + ((theta - 1.0) / theta_next) * (h - h_prev)
            vy, gy, fy = evaluate(y)
            theta = theta_next
    else:
        k = cfg.max_iters
    res = float(np.max(np.abs(g)))
    if res > tol:
        raise NonConvergenceError("pressure gradient descent did not converge", res, k)
    h = h - h[net.ref_index] + h_r
    info = {"iterations": k}
    if history is not None:
        info["objective_history"] = history
    return make_solution(net, f, h, d, "energy-gradient", info=info)


def solve_energy(net: Network, d, h_r: float = 0.0, rho=None, cfg: SolverConfig | None = None,
                 method: str = "dual") -> WfSolution:
    if method == "dual":
        return solve_dual_decomposition(net, d, h_r, rho, cfg)
    if method == "gradient":
        return solve_gradient_pressure(net, d, h_r, rho, cfg)
    raise InputError(f"unknown energy method {method!r}")


def export_socp(net: Network, d: Sequence[float]) -> ConicModel:
    """Rotated-cone model of the cubic energy problem.

    Per pipe p: variables f_p, w_p, y_p, t_p with ``-w_p <= f_p <= w_p``,
    ``w_p^2 <= y_p`` and ``y_p^2 <= w_p t_p``; objective
    ``(1/3) sum c_p t_p``. Mass balance is written for every node but the
    reference (the dropped row is implied by the others).
    """
    d = _check(net, d)
    pipes = _Pipes(net, None)
    if np.any(pipes.rho != 2.0):
        raise UnsupportedNetworkError("the cone model is only available for quadratic head loss (rho = 2)")
    m = ConicModel()
    m.comments.append(f"nodes {net.n_nodes} pipes {net.n_edges} reference {net.reference}")
    for p, e in enumerate(net.edges):
        m.comments.append(f"pipe {p} = {e.id} ({e.tail} -> {e.head}) c={e.kind.c!r}")
    for p in range(net.n_edges):
        for v in "fwyt":
            m.var(f"{v}_{p}")
    for k in range(net.n_nodes):
        if k == net.ref_index:
            continue
        terms = [(f"f_{p}", 1.0) for p in range(net.n_edges) if net.tails[p] == k]
        terms += [(f"f_{p}", -1.0) for p in range(net.n_edges) if net.heads[p] == k]
        m.equalities.append((terms, float(d[k])))
    for p in range(net.n_edges):
        m.inequalities.append(([(f"f_{p}", 1.0), (f"w_{p}", -1.0)], 0.0))
        m.inequalities.append(([(f"f_{p}", -1.0), (f"w_{p}", -1.0)], 0.0))
    for p in range(net.n_edges):
        m.rcones.append((1.0, f"w_{p}", f"y_{p}"))
        m.rcones.append((f"w_{p}", f"y_{p}", f"t_{p}"))
    m.objective = [(f"t_{p}", pipes.c[p] / 3.0) for p in range(net.n_edges)]
    return m
