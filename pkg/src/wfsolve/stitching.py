"""Stitching solver for networks whose pumps lie on no cycle.

Removing the pump edges splits the network into pump-free components
joined by the pumps in a tree pattern. Pump flows follow from that tree
and the component demands, each component is solved with an energy
solver after moving the pump flows into its injections, and the
component pressures are shifted so every pump delivers its gain.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy import SolverConfig, solve_energy
from .errors import InputError, UnsupportedNetworkError
from .graph import analyze_cycles, components_without, solve_tree_flows, subnetwork
from .hydraulics import (OffPumpMode, apply_off_pumps, contract_edges, edge_head_change, make_solution)
from .network import Network, WfInput, WfSolution, balance_tolerance


@dataclass(frozen=True)
class StitchConfig:
    energy_method: str = "gradient"
    energy: SolverConfig = field(default_factory=SolverConfig)


@dataclass(frozen=True)
class Supergraph:
    """Components of the pump-free graph and the pumps joining them."""

    components: tuple  # (node indices, edge indices) per component
    comp_of: np.ndarray  # node index -> component index
    pumps: tuple  # pump edge indices
    links: tuple  # (pump index, tail component, head component)

    @property
    def n_components(self) -> int:
        return len(self.components)


def supergraph(net: Network, pumps=None) -> Supergraph:
    """Contract every pump-free component to a supernode.

    ``pumps`` defaults to all pump edges. The result must be a tree, i.e.
    have ``len(pumps) + 1`` components; otherwise a pump lies on a cycle.
    """
    pumps = tuple(net.pump_indices if pumps is None else pumps)
    comps = components_without(net, removed_edges=pumps)
    if len(comps) != len(pumps) + 1:
        raise UnsupportedNetworkError(
            f"removing {len(pumps)} pump(s) leaves {len(comps)} components; a pump lies on a cycle")
    comp_of = np.empty(net.n_nodes, dtype=int)
    for i, (nodes, _) in enumerate(comps):
        comp_of[nodes] = i
    links = tuple((p, int(comp_of[net.tails[p]]), int(comp_of[net.heads[p]])) for p in pumps)
    return Supergraph(tuple((tuple(n), tuple(e)) for n, e in comps), comp_of, pumps, links)


def _solve_component(net: Network, nodes, edges, d_hat, cfg: StitchConfig):
    """Pump-free component solve with its first node at pressure 0."""
    sub = subnetwork(net, nodes, edges, reference=net.nodes[nodes[0]].id)
    d_sub = d_hat[list(nodes)]
    if abs(d_sub.sum()) > 1e3 * balance_tolerance(d_hat):
        raise InputError(f"component injections do not balance (sum {d_sub.sum():.3e})")
    d_sub = d_sub - d_sub.mean() if d_sub.size else d_sub
    lossless = [p for p, e in enumerate(sub.edges) if e.kind.is_lossless]
    red = contract_edges(sub, lossless)
    d_red = red.reduce_injections(d_sub)
    sol = solve_energy(red.network, d_red, 0.0, cfg=cfg.energy, method=cfg.energy_method)
    f, h = red.expand(sol.flows, sol.pressures, d_sub)
    return f, h, sol.info.get("iterations", 0)


def stitch(net: Network, d, h_r: float, cfg: StitchConfig | None = None):
    """Flows and pressures on a network (all pumps on) with no pump on a cycle."""
    cfg = cfg or StitchConfig()
    d = np.asarray(d, dtype=float)
    sg = supergraph(net)
    # pump flows from the supergraph tree
    b = np.bincount(sg.comp_of, d, sg.n_components)
    tails = [t for _, t, _ in sg.links]
    heads = [h for _, _, h in sg.links]
    tf = solve_tree_flows(sg.n_components, tails, heads, range(len(sg.links)), b)
    f = np.zeros(net.n_edges)
    d_hat = d.copy()
    for i, (p, _, _) in enumerate(sg.links):
        f[p] = tf[i]
        d_hat[net.tails[p]] -= f[p]
        d_hat[net.heads[p]] += f[p]
    # per-component energy solves
    h = np.zeros(net.n_nodes)
    iters = []
    for nodes, edges in sg.components:
        fc, hc, it = _solve_component(net, nodes, edges, d_hat, cfg)
        f[list(edges)] = fc
        h[list(nodes)] = hc
        iters.append(it)
    # shift component pressures outward from the reference component
    adj: list[list[int]] = [[] for _ in range(sg.n_components)]
    for p, a, c in sg.links:
        adj[a].append(p)
        adj[c].append(p)
    root = int(sg.comp_of[net.ref_index])
    h[list(sg.components[root][0])] += h_r - h[net.ref_index]
    done = {root}
    queue = deque([root])
    while queue:
        a = queue.popleft()
        for p in adj[a]:
            m, n = net.tails[p], net.heads[p]
            drop = edge_head_change(net, p, f[p])  # h_m - h_n
            if sg.comp_of[m] == a and sg.comp_of[n] not in done:
                nxt, shift = int(sg.comp_of[n]), h[m] - drop - h[n]
            elif sg.comp_of[n] == a and sg.comp_of[m] not in done:
                nxt, shift = int(sg.comp_of[m]), h[n] + drop - h[m]
            else:
                continue
            h[list(sg.components[nxt][0])] += shift
            done.add(nxt)
            queue.append(nxt)
    return f, h, {"components": sg.n_components, "iterations": iters}


def solve_stitching(net: Network, inp: WfInput, cfg: StitchConfig | None = None) -> WfSolution:
    """Water-flow solution for a network whose running pumps lie on no cycle."""
    inp.check(net)
    red = apply_off_pumps(net, inp, OffPumpMode.CONTRACT)
    rnet = red.network
    cs = analyze_cycles(rnet)
    if any(p in cs.cycle_edges for p in rnet.pump_indices):
        raise UnsupportedNetworkError("a running pump lies on a cycle; use the hybrid or mixed-integer solver")
    d_red = red.reduce_injections(inp.injections)
    fr, hr, info = stitch(rnet, d_red, inp.reference_pressure, cfg)
    f, h = red.expand(fr, hr, inp.injections)
    return make_solution(net, f, h, inp.injections, "stitching", statuses=inp, info=info)
