"""Head-loss and pump laws, their inverses, off-pump handling and the
flow <-> pressure recovery on a known network."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InfeasibleError
from .graph import solve_tree_flows, spanning_tree
from .network import Edge, LossyPipe, Network, Pump, WfInput, WfSolution, mass_residual


def head_drop(c, rho, f):
    """``c * sign(f) * |f|**rho``, vectorised."""
    f = np.asarray(f, dtype=float)
    return np.asarray(c) * np.sign(f) * np.abs(f) ** rho


def flow_from_drop(c, rho, dh):
    """Inverse of :func:`head_drop` for ``c > 0``."""
    dh = np.asarray(dh, dtype=float)
    return np.sign(dh) * (np.abs(dh) / np.asarray(c)) ** (1.0 / np.asarray(rho))


def pump_gain(pump: Pump, f):
    f = np.asarray(f, dtype=float)
    return pump.lam * f * f + pump.mu_bar * f + pump.nu_bar


def pump_gain_slope(pump: Pump, f):
    return 2.0 * pump.lam * np.asarray(f, dtype=float) + pump.mu_bar


def pump_flow_from_gain(pump: Pump, g: float, check_range: bool = True, tol: float = 1e-9) -> float:
    """Flow on the decreasing branch of the pump curve giving gain ``g``."""
    if check_range:
        hi = float(pump_gain(pump, pump.f_min))
        lo = float(pump_gain(pump, pump.f_max)) if np.isfinite(pump.f_max) else -np.inf
        scale = tol * max(1.0, abs(hi))
        if g > hi + scale or g < lo - scale:
            raise InfeasibleError(
                f"pump gain {g:.6g} m is outside the achievable range [{lo:.6g}, {hi:.6g}]")
    disc = pump.mu_bar**2 - 4.0 * pump.lam * (pump.nu_bar - g)
    if disc < 0:
        if not check_range:
            return -pump.mu_bar / (2.0 * pump.lam)
        raise InfeasibleError(f"pump gain {g:.6g} m exceeds the curve maximum")
    f = (-pump.mu_bar - np.sqrt(disc)) / (2.0 * pump.lam)
    if check_range:
        f = min(max(f, pump.f_min), pump.f_max)
    return float(f)


# ---------------------------------------------------------------------------
# Off pumps

class OffPumpMode(str, Enum):
    CONTRACT = "contract"
    BYPASS_PIPE = "bypass"


def _status_of(statuses, edge_id) -> bool:
    if isinstance(statuses, WfInput):
        return statuses.is_on(edge_id)
    return bool(statuses.get(edge_id, True))


@dataclass(frozen=True, eq=False)
class OffPumpReduction:
    """Network with off pumps removed, and the maps to undo it."""

    original: Network
    network: Network
    mode: OffPumpMode
    rep: np.ndarray  # original node index -> reduced node index
    kept: np.ndarray  # reduced edge index -> original edge index
    off_edges: tuple  # original indices of off pumps
    loops: tuple  # original indices of edges whose ends were merged (not off pumps)

    @property
    def identity(self) -> bool:
        return not self.off_edges

    def reduce_injections(self, d: Sequence[float]) -> np.ndarray:
        out = np.zeros(self.network.n_nodes)
        np.add.at(out, self.rep, np.asarray(d, dtype=float))
        return out

    def reduce_input(self, inp: WfInput) -> WfInput:
        ids = set(self.network.edge_ids)
        status = {k: v for k, v in inp.pump_status.items() if k in ids}
        return WfInput(self.reduce_injections(inp.injections), inp.reference_pressure, status)

    def expand(self, f_red: np.ndarray, h_red: np.ndarray, d: Sequence[float]):
        """Lift a reduced solution back to the original network."""
        net = self.original
        f = np.zeros(net.n_edges)
        f[self.kept] = f_red
        h = np.asarray(h_red, dtype=float)[self.rep]
        if self.mode is OffPumpMode.BYPASS_PIPE or not self.off_edges:
            return f, h
        for p in self.loops:
            kind = net.edges[p].kind
            f[p] = pump_flow_from_gain(kind, 0.0, check_range=False) if isinstance(kind, Pump) else 0.0
        # off-pump flows carry whatever the merged nodes still need
        known = np.zeros(net.n_edges, dtype=bool)
        known[self.kept] = True
        known[list(self.loops)] = True
        fk = np.where(known, f, 0.0)
        need = -mass_residual(net, fk, d)  # required net outflow on off edges
        forest, _ = _forest(net, self.off_edges)
        sol = solve_tree_flows(net.n_nodes, net.tails, net.heads, forest, need)
        for p in self.off_edges:
            f[p] = sol.get(p, 0.0)
        return f, h


def _forest(net: Network, edges: Sequence[int]):
    """A spanning forest (as edge index list) of the subgraph formed by ``edges``."""
    parent = list(range(net.n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    forest = []
    for p in edges:
        a, b = find(int(net.tails[p])), find(int(net.heads[p]))
        if a != b:
            parent[a] = b
            forest.append(p)
    return forest, parent


def apply_off_pumps(net: Network, statuses, mode: OffPumpMode = OffPumpMode.CONTRACT,
                    bypass_c: float = 1e-4) -> OffPumpReduction:
    """Remove pumps that are off.

    ``CONTRACT`` merges the pump's end nodes (equal pressure, zero gain);
    ``BYPASS_PIPE`` swaps the pump for a short lossy pipe of coefficient
    ``bypass_c``.
    """
    mode = OffPumpMode(mode)
    off = tuple(p for p, e in enumerate(net.edges) if e.is_pump and not _status_of(statuses, e.id))
    if not off:
        return OffPumpReduction(net, net, mode, np.arange(net.n_nodes), np.arange(net.n_edges), (), ())
    if mode is OffPumpMode.BYPASS_PIPE:
        edges = [Edge(e.id, e.tail, e.head, LossyPipe(bypass_c)) if p in off else e
                 for p, e in enumerate(net.edges)]
        return OffPumpReduction(net, Network(net.nodes, edges, net.reference), mode,
                                np.arange(net.n_nodes), np.arange(net.n_edges), off, ())

    return contract_edges(net, off, mode)


def contract_edges(net: Network, edges: Sequence[int], mode: OffPumpMode = OffPumpMode.CONTRACT,
                   ) -> OffPumpReduction:
    """Merge the end nodes of ``edges`` (equal pressures, flows set by mass
    balance on expansion). Used for off pumps and for lossless links."""
    off = tuple(int(p) for p in edges)
    if not off:
        return OffPumpReduction(net, net, mode, np.arange(net.n_nodes), np.arange(net.n_edges), (), ())
    forest, uf = _forest(net, off)

    def find(a):
        while uf[a] != a:
            a = uf[a]
        return a

    # representative of each merged group: the reference if present, else the first node
    groups: dict[int, list[int]] = {}
    for k in range(net.n_nodes):
        groups.setdefault(find(k), []).append(k)
    rep_node = {}
    for root, members in groups.items():
        rep_node[root] = net.ref_index if net.ref_index in members else members[0]
    new_nodes = []
    new_index = {}
    for k, n in enumerate(net.nodes):
        if rep_node[find(k)] == k:
            new_index[k] = len(new_nodes)
            new_nodes.append(n)
    rep = np.array([new_index[rep_node[find(k)]] for k in range(net.n_nodes)], dtype=int)
    kept, loops, new_edges = [], [], []
    for p, e in enumerate(net.edges):
        if p in off:
            continue
        a, b = rep[net.tails[p]], rep[net.heads[p]]
        if a == b:
            loops.append(p)
            continue
        kept.append(p)
        new_edges.append(Edge(e.id, new_nodes[a].id, new_nodes[b].id, e.kind))
    reduced = Network(new_nodes, new_edges, net.nodes[net.ref_index].id)
    return OffPumpReduction(net, reduced, mode, rep, np.array(kept, dtype=int), off, tuple(loops))


# ---------------------------------------------------------------------------
# Flow <-> pressure

def _is_active_pump(net: Network, p: int, statuses) -> bool:
    e = net.edges[p]
    return e.is_pump and (statuses is None or _status_of(statuses, e.id))


def edge_head_change(net: Network, p: int, f: float, statuses=None) -> float:
    """``h_tail - h_head`` implied by flow ``f`` on edge ``p``."""
    e = net.edges[p]
    if e.is_pump:
        if statuses is not None and not _status_of(statuses, e.id):
            return 0.0
        return -float(pump_gain(e.kind, f))
    if e.kind.is_lossless:
        return 0.0
    return float(head_drop(e.kind.c, e.kind.rho, f))


def pressures_from_flows(net: Network, f: Sequence[float], h_r: float, statuses=None) -> np.ndarray:
    """Pressures accumulated along a BFS tree from the reference node."""
    f = np.asarray(f, dtype=float)
    parent, order = spanning_tree(net)
    h = np.zeros(net.n_nodes)
    h[net.ref_index] = h_r
    for k in order[1:]:
        p = parent[k]
        j = net.other_end(p, k)
        dh = edge_head_change(net, p, f[p], statuses)
        h[k] = h[j] - dh if net.tails[p] == j else h[j] + dh
    return h


def flows_from_pressures(net: Network, h: Sequence[float], statuses=None) -> np.ndarray:
    """Per-edge inversion of the head laws.

    Off pumps and lossless links carry no pressure information; their flow
    is returned as NaN.
    """
    h = np.asarray(h, dtype=float)
    f = np.empty(net.n_edges)
    for p, e in enumerate(net.edges):
        dh = h[net.tails[p]] - h[net.heads[p]]
        if e.is_pump:
            if statuses is not None and not _status_of(statuses, e.id):
                f[p] = np.nan
            else:
                f[p] = pump_flow_from_gain(e.kind, -dh)
        elif e.kind.is_lossless:
            f[p] = np.nan
        else:
            f[p] = float(flow_from_drop(e.kind.c, e.kind.rho, dh))
    return f


def edge_residuals(net: Network, f: Sequence[float], h: Sequence[float], statuses=None) -> np.ndarray:
    """|violation| of the head law on every edge, in meters."""
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    out = np.empty(net.n_edges)
    for p in range(net.n_edges):
        dh = h[net.tails[p]] - h[net.heads[p]]
        out[p] = abs(dh - edge_head_change(net, p, f[p], statuses))
    return out


def pump_range_warnings(net: Network, f: Sequence[float], statuses=None, tol: float = 1e-6) -> list[str]:
    out = []
    for p in net.pump_indices:
        e = net.edges[p]
        if statuses is not None and not _status_of(statuses, e.id):
            continue
        lo, hi = e.kind.f_min, e.kind.f_max
        if f[p] < lo - tol * max(1, lo) or f[p] > hi + tol * max(1, hi):
            out.append(f"pump {e.id!r} flow {f[p]:.6g} outside its range [{lo:g}, {hi:g}]")
    return out


def make_solution(net: Network, f, h, d, tag: str, statuses=None, status: str = "solved",
                  warnings=(), info=None) -> WfSolution:
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    res_mass = float(np.max(np.abs(mass_residual(net, f, d)))) if net.n_nodes else 0.0
    res_edges = edge_residuals(net, f, h, statuses)
    warns = tuple(warnings) + tuple(pump_range_warnings(net, f, statuses))
    for a in (f, h, res_edges):
        a.setflags(write=False)
    return WfSolution(f, h, res_mass, res_edges, tag, status, warns, dict(info or {}))
