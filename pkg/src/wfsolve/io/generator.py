"""Random feasible water-flow instances with known solutions.

Pressures are drawn first, pumps then push their head node up by the
gain at a drawn flow, lossy-pipe flows follow from the pressures and the
injections from mass balance, so the drawn (f, h) solves the instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..graph import spanning_tree
from ..hydraulics import flows_from_pressures, make_solution, pump_gain
from ..network import Network, WfInput, WfSolution, build_incidence


@dataclass(frozen=True)
class InstanceGenConfig:
    seed: int = 0
    reference_pressure: float = 10.0
    pressure_mean: float = 10.0
    pressure_var: float = 2.0
    pump_on_prob: float = 0.5
    on_flow_range: tuple = (250.0, 1500.0)
    off_flow_var: float = 200.0
    demand_scale_range: tuple = (0.0, 1.5)

    def __post_init__(self):
        if self.pressure_var < 0 or self.off_flow_var < 0:
            raise InputError("variances must be non-negative")
        if not 0.0 <= self.pump_on_prob <= 1.0:
            raise InputError("pump on-probability must lie in [0, 1]")
        for lo, hi in (self.on_flow_range, self.demand_scale_range):
            if lo > hi:
                raise InputError(f"range ({lo}, {hi}) is not ordered")


def _pump_order(net: Network) -> list[int]:
    """Pumps sorted by BFS depth of their nearer end, then by index."""
    parent, order = spanning_tree(net)
    depth = np.zeros(net.n_nodes, dtype=int)
    for k in order[1:]:
        depth[k] = depth[net.other_end(parent[k], k)] + 1
    return sorted(net.pump_indices, key=lambda p: (min(depth[net.tails[p]], depth[net.heads[p]]), p))


def generate_feasible_instance(net: Network, cfg: InstanceGenConfig | None = None,
                               seed: int | None = None) -> tuple[WfInput, WfSolution]:
    """Draw one instance; returns the input and the generating solution."""
    cfg = cfg or InstanceGenConfig()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    N = net.n_nodes
    h = rng.normal(cfg.pressure_mean, np.sqrt(cfg.pressure_var), N)
    h[net.ref_index] = cfg.reference_pressure
    f = np.zeros(net.n_edges)
    status = {}
    pinned = np.zeros(N, dtype=bool)
    pinned[net.ref_index] = True
    pumps = _pump_order(net)
    for p in pumps:
        on = bool(rng.random() < cfg.pump_on_prob)
        status[net.edges[p].id] = on
        if on:
            f[p] = rng.uniform(*cfg.on_flow_range)
        else:
            f[p] = rng.normal(0.0, np.sqrt(cfg.off_flow_var))
    for p in pumps:
        g = float(pump_gain(net.edges[p].kind, f[p])) if status[net.edges[p].id] else 0.0
        m, n = net.tails[p], net.heads[p]
        if not pinned[n]:
            h[n] = h[m] + g
            pinned[n] = True
        elif not pinned[m]:
            h[m] = h[n] - g
            pinned[m] = True
        else:
            raise InputError(f"pump {net.edges[p].id!r}: both end pressures are already fixed")
    fl = flows_from_pressures(net, h, status)
    for p in net.pipe_indices:
        if net.edges[p].kind.is_lossless:
            raise InputError("generator does not support lossless links")
        f[p] = fl[p]
    d = build_incidence(net).T @ f
    inp = WfInput(d, cfg.reference_pressure, status)
    truth = make_solution(net, f, h, d, "generator", statuses=inp)
    return inp, truth


def scaled_demand_instance(base: WfInput, cfg: InstanceGenConfig | None = None,
                           seed: int | None = None) -> tuple[WfInput, float]:
    """Base injections times a scalar drawn from the demand-scaling range."""
    cfg = cfg or InstanceGenConfig()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    a = float(rng.uniform(*cfg.demand_scale_range))
    return base.replace(injections=np.asarray(base.injections) * a), a
