"""Hybrid solver for pumps on isolated cycles, and the topology dispatcher.

The hybrid scheme detaches every pump-carrying cycle (splitting nodes it
shares with other cycles through lossless links), fixes the flows on the
bridges that join cycles to the rest, solves the remaining pump-free or
tree-pumped pieces with the stitching solver and each pump cycle with its
own small mixed-integer relaxation, then shifts the piece pressures along
the bridges.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy import solve_energy
from .errors import UnsupportedNetworkError, WfError
from .graph import (TopologyClass, analyze_cycles, classify_topology, components_without,
                    contract_supernodes, fix_noncycle_flows, particular_flow, subnetwork)
from .hydraulics import OffPumpMode, apply_off_pumps, edge_head_change, make_solution, pressures_from_flows
from .miqcqp import W2Config, solve_w2
from .network import Network, WfInput, WfSolution
from .stitching import StitchConfig, solve_stitching, stitch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HybridConfig:
    stitch: StitchConfig = field(default_factory=StitchConfig)
    w2: W2Config = field(default_factory=W2Config)
    residual_tol: float = 1e-6
    solver: str = "auto"  # auto | tree | energy | stitch | miqcqp | hybrid


def _staged(stage: str, exc: WfError) -> WfError:
    exc.stage = stage
    if exc.args and isinstance(exc.args[0], str):
        exc.args = (f"[{stage}] {exc.args[0]}",) + exc.args[1:]
    return exc


def _finish(net: Network, inp: WfInput, f, h, tag: str, cfg: HybridConfig, info=None, warnings=()):
    """Build the solution and downgrade it to ``candidate`` if it fails validation."""
    sol = make_solution(net, f, h, inp.injections, tag, statuses=inp, warnings=warnings, info=info)
    scale = max(1.0, float(np.max(np.abs(inp.injections)))) if net.n_nodes else 1.0
    if sol.residual_mass > cfg.residual_tol * scale or sol.max_edge_residual > cfg.residual_tol:
        msg = (f"validation failed: mass residual {sol.residual_mass:.3e}, "
               f"edge residual {sol.max_edge_residual:.3e}")
        return make_solution(net, f, h, inp.injections, tag, statuses=inp, status="candidate",
                             warnings=tuple(warnings) + (msg,), info=info)
    return sol


def pump_cycle_edges(net: Network, cs=None) -> list[list[int]]:
    """Edge sets of the cycles carrying running pumps.

    Raises when a pump lies in a block with more than one cycle.
    """
    cs = cs or analyze_cycles(net)
    clusters = cs.clusters()
    where = cs.edge_cluster()
    picked = []
    for p in net.pump_indices:
        if p not in cs.cycle_edges:
            continue
        group = clusters[where[p]]
        if len(group) > 1:
            raise UnsupportedNetworkError(f"pump {net.edges[p].id!r} lies on overlapping cycles")
        if group[0] not in picked:
            picked.append(group[0])
    return [list(cs.cycles[i].edges) for i in picked]


def solve_hybrid(net: Network, inp: WfInput, cfg: HybridConfig | None = None) -> WfSolution:
    """Water-flow solution for networks whose pumps avoid overlapping cycles."""
    cfg = cfg or HybridConfig()
    inp.check(net)
    red = apply_off_pumps(net, inp, OffPumpMode.CONTRACT)
    rnet = red.network
    cs = analyze_cycles(rnet)
    cycles = pump_cycle_edges(rnet, cs)
    if not cycles:
        return solve_stitching(net, inp, cfg.stitch)
    d = red.reduce_injections(inp.injections)

    # node splitting and supernode contraction
    con = contract_supernodes(rnet, cycles, cs)
    S = con.split_network
    d_s = np.concatenate([d, np.zeros(S.n_nodes - rnet.n_nodes)])
    cyc_edges = [sorted(S.edge_index(rnet.edges[p].id) for p in c) for c in cycles]
    cyc_nodes = [sorted({int(S.tails[p]) for p in c} | {int(S.heads[p]) for p in c}) for c in cyc_edges]

    # bridge flows and injection adjustments
    bridge = fix_noncycle_flows(S, d_s)
    in_cycle = {k for ns in cyc_nodes for k in ns}
    pieces = components_without(S, removed_nodes=in_cycle)
    blocks = [(ns, es, "cycle") for ns, es in zip(cyc_nodes, cyc_edges)] + \
             [(ns, es, "piece") for ns, es in pieces]
    owned = {p for _, es, _ in blocks for p in es}
    connectors = [p for p in range(S.n_edges) if p not in owned]
    f = np.zeros(S.n_edges)
    d_hat = d_s.copy()
    for p in connectors:
        if p not in bridge:
            raise UnsupportedNetworkError(f"edge {S.edges[p].id!r} joins a pump cycle but is not a bridge")
        f[p] = bridge[p]
        d_hat[S.tails[p]] -= f[p]
        d_hat[S.heads[p]] += f[p]

    # per-block solves, each with its first node at pressure 0
    h = np.zeros(S.n_nodes)
    warnings, gaps = [], []
    block_of = np.empty(S.n_nodes, dtype=int)
    for b, (ns, es, kind) in enumerate(blocks):
        ns, es = sorted(ns), sorted(es)  # subnetwork order
        block_of[ns] = b
        sub = subnetwork(S, ns, es, reference=S.nodes[ns[0]].id)
        db = d_hat[ns] - np.mean(d_hat[ns])
        if kind == "piece":
            try:
                fb, hb, _ = stitch(sub, db, 0.0, cfg.stitch)
            except WfError as exc:
                raise _staged("components", exc)
        else:
            try:
                sol, rep = solve_w2(sub, WfInput(db, 0.0), cfg.w2)
            except WfError as exc:
                raise _staged("cycle", exc)
            fb, hb = sol.flows, sol.pressures
            gaps.append(rep.max_gap)
            if not rep.exact:
                warnings.append(f"cycle relaxation inexact (gap {rep.max_gap:.3e} m)")
        f[list(es)] = fb
        h[list(ns)] = hb

    # pressure assembly along the bridge tree
    adj: list[list[int]] = [[] for _ in blocks]
    for p in connectors:
        adj[block_of[S.tails[p]]].append(p)
        adj[block_of[S.heads[p]]].append(p)
    root = int(block_of[S.ref_index])
    h[blocks[root][0]] += inp.reference_pressure - h[S.ref_index]
    done, queue = {root}, deque([root])
    while queue:
        a = queue.popleft()
        for p in adj[a]:
            m, n = S.tails[p], S.heads[p]
            drop = edge_head_change(S, p, f[p])
            if block_of[m] == a and block_of[n] not in done:
                nxt, shift = int(block_of[n]), h[m] - drop - h[n]
            elif block_of[n] == a and block_of[m] not in done:
                nxt, shift = int(block_of[m]), h[n] + drop - h[m]
            else:
                continue
            h[blocks[nxt][0]] += shift
            done.add(nxt)
            queue.append(nxt)

    for node, clone, _ in con.split_pairs:
        gap = abs(h[S.node_index(node)] - h[S.node_index(clone)])
        if gap > cfg.residual_tol:
            warnings.append(f"split pair {node!r} differs by {gap:.3e} m")
    fr, hr = f[:rnet.n_edges], h[:rnet.n_nodes]
    f_full, h_full = red.expand(fr, hr, inp.injections)
    info = {"cycles": len(cycles), "pieces": len(pieces), "reduced_nodes": con.network.n_nodes,
            "cycle_gaps": gaps, "split_pairs": len(con.split_pairs)}
    return _finish(net, inp, f_full, h_full, "hybrid", cfg, info, warnings)


def solve_tree(net: Network, inp: WfInput) -> WfSolution:
    """Back-substitution on a network whose running part is a tree."""
    inp.check(net)
    red = apply_off_pumps(net, inp, OffPumpMode.CONTRACT)
    d = red.reduce_injections(inp.injections)
    if analyze_cycles(red.network).cycles:
        raise UnsupportedNetworkError("network has cycles")
    fr = particular_flow(red.network, d)
    hr = pressures_from_flows(red.network, fr, inp.reference_pressure)
    f, h = red.expand(fr, hr, inp.injections)
    return make_solution(net, f, h, inp.injections, "tree", statuses=inp)


def _solve_energy_full(net: Network, inp: WfInput, cfg: HybridConfig) -> WfSolution:
    red = apply_off_pumps(net, inp, OffPumpMode.CONTRACT)
    d = red.reduce_injections(inp.injections)
    st = cfg.stitch
    sol = solve_energy(red.network, d, inp.reference_pressure, cfg=st.energy, method=st.energy_method)
    f, h = red.expand(sol.flows, sol.pressures, inp.injections)
    return make_solution(net, f, h, inp.injections, sol.solver_tag, statuses=inp, info=sol.info)


def _solve_w2(net: Network, inp: WfInput, cfg: HybridConfig) -> WfSolution:
    sol, rep = solve_w2(net, inp, cfg.w2)
    sol.info["report"] = rep
    return sol


ROUTES = {
    TopologyClass.TREE: "tree",
    TopologyClass.NO_PUMPS: "energy",
    TopologyClass.PUMPS_NOT_IN_CYCLES: "stitch",
    TopologyClass.NON_OVERLAPPING_CYCLES: "miqcqp",
    TopologyClass.PUMPS_NOT_IN_OVERLAPPING_CYCLES: "hybrid",
    TopologyClass.UNSUPPORTED: "miqcqp",
}


def route(net: Network, inp: WfInput) -> tuple[TopologyClass, str]:
    """Topology class of the running network and the solver it maps to."""
    red = apply_off_pumps(net, inp, OffPumpMode.CONTRACT)
    cls = classify_topology(red.network)
    return cls, ROUTES[cls]


def dispatch(net: Network, inp: WfInput, cfg: HybridConfig | None = None) -> WfSolution:
    """Pick the solver suited to the network topology (or ``cfg.solver``)."""
    cfg = cfg or HybridConfig()
    inp.check(net)
    cls, name = route(net, inp)
    if cfg.solver != "auto":
        name = cfg.solver
    log.info("topology %s, using %s", cls.value, name)
    if name == "tree":
        sol = solve_tree(net, inp)
    elif name == "energy":
        sol = _solve_energy_full(net, inp, cfg)
    elif name == "stitch":
        sol = solve_stitching(net, inp, cfg.stitch)
    elif name == "hybrid":
        sol = solve_hybrid(net, inp, cfg)
    elif name == "miqcqp":
        sol = _solve_w2(net, inp, cfg)
    else:
        raise ValueError(f"unknown solver {name!r}")
    sol.info["topology"] = cls.value
    sol.info["solver"] = name
    if cls is TopologyClass.UNSUPPORTED and name == "miqcqp":
        msg = "pumps on overlapping cycles: the relaxation carries no exactness guarantee"
        return WfSolution(sol.flows, sol.pressures, sol.residual_mass, sol.residual_edges, sol.solver_tag,
                          sol.status, sol.warnings + (msg,), sol.info)
    return sol
