"""Reconstructed benchmark networks.

The layouts below are reconstructions: only the topology classes, node
and edge counts and pump parameters are known for the benchmark
networks, so pipe coefficients are fixed, plausible values.
"""

from __future__ import annotations

import numpy as np

from ..network import Edge, LossyPipe, Network, Node, NodeKind, Pump, WfInput

# fixed-speed pump used throughout the Monte-Carlo benchmarks
BENCH_PUMP = Pump(-2.735e-5, 0.0129, 55.83, 250.0, 1500.0)

_TEMPLATE_PIPES = [
    ((4, 5), 4.2e-5), ((5, 6), 6.1e-5), ((6, 2), 3.3e-5), ((2, 1), 5.5e-5), ((6, 8), 7.4e-5),
    ((8, 9), 2.8e-5), ((9, 3), 4.9e-5), ((3, 6), 8.7e-5), ((8, 3), 3.9e-5), ((4, 7), 6.6e-5),
    ((9, 10), 5.2e-5),
]
_TEMPLATE_PUMP = (1, 4)
# chord that merges the pump cycle with the pump-free cycles into one block
_CHORD = ((10, 2), 4.5e-5)
_LINKS = [((8, 18), 3.6e-5), ((3, 13), 5.8e-5)]


def _pipe(a, b, c, rho=2.0):
    return Edge(f"{a}-{b}", a, b, LossyPipe(c, rho))


def net20(config: str = "C-i", pump: Pump = BENCH_PUMP) -> Network:
    """20-node network made of two copies of a 10-node block plus two links.

    Each block holds a pump on a five-edge cycle and a pump-free pair of
    overlapping cycles. ``"C-i"`` leaves the pump cycles isolated (pumps
    only on non-overlapping cycles); ``"C-ii"`` adds a chord per block
    joining the two, so the pumps sit on overlapping cycles. Node 1 is the
    reference.
    """
    if config not in ("C-i", "C-ii"):
        raise ValueError(f"unknown configuration {config!r}")
    pipes = list(_TEMPLATE_PIPES) + ([_CHORD] if config == "C-ii" else [])
    edges = []
    for off in (0, 10):
        for (a, b), c in pipes:
            edges.append(_pipe(a + off, b + off, c))
        a, b = _TEMPLATE_PUMP
        edges.append(Edge(f"pump{a + off}-{b + off}", a + off, b + off, pump))
    edges += [_pipe(a, b, c) for (a, b), c in _LINKS]
    return Network([Node(k) for k in range(1, 21)], edges, 1)


def net10(pump: Pump = BENCH_PUMP) -> Network:
    """One 10-node block: a pump on a five-edge cycle and two overlapping pump-free cycles."""
    edges = [_pipe(a, b, c) for (a, b), c in _TEMPLATE_PIPES]
    a, b = _TEMPLATE_PUMP
    edges.append(Edge(f"pump{a}-{b}", a, b, pump))
    return Network([Node(k) for k in range(1, 11)], edges, 1)


# strongly disparate coefficients; edge (1,3) lies on two cycles
_DISPARATE_PIPES = [((1, 2), 0.03), ((1, 3), 3e-4), ((1, 4), 0.04), ((3, 2), 0.9), ((3, 4), 10.0)]
DISPARATE_DEMANDS = {2: 20.0, 4: 16.0}


def disparate4() -> tuple[Network, WfInput]:
    """Pump-free 4-node, 5-pipe network on which the mixed-integer relaxation is inexact.

    Node 1 is the reference at 10 m and supplies the demands at nodes 2 and 4.
    """
    net = Network([Node(k) for k in range(1, 5)], [_pipe(a, b, c) for (a, b), c in _DISPARATE_PIPES], 1)
    d = np.zeros(4)
    for k, q in DISPARATE_DEMANDS.items():
        d[k - 1] = -q
    d[0] = -d.sum()
    return net, WfInput(d, 10.0)


_HYBRID_PIPES = [
    # G1 around the reference node
    ((1, 20), 5.0e-5), ((20, 21), 4.0e-5), ((21, 1), 6.0e-5), ((21, 22), 3.5e-5), ((22, 23), 4.5e-5),
    ((1, 2), 3.0e-5),
    # pump cycle C1 (pump 2 -> 3)
    ((3, 4), 5.5e-5), ((4, 2), 4.8e-5),
    # G2: two overlapping cycles meeting C1 at node 4
    ((4, 5), 4.2e-5), ((5, 6), 6.1e-5), ((6, 4), 3.3e-5), ((6, 7), 7.4e-5), ((7, 8), 2.8e-5),
    ((8, 5), 4.9e-5), ((8, 9), 3.9e-5), ((9, 10), 6.6e-5),
    ((10, 11), 5.2e-5),
    # pump cycle C2 (pump 11 -> 12)
    ((12, 13), 4.4e-5), ((13, 14), 5.9e-5), ((14, 11), 3.7e-5),
    ((13, 15), 4.1e-5),
    # G3
    ((15, 16), 5.3e-5), ((16, 17), 4.6e-5), ((17, 15), 6.4e-5), ((17, 18), 3.2e-5), ((18, 19), 5.7e-5),
]


def hybrid23(pump: Pump = BENCH_PUMP) -> Network:
    """23-node network with 26 pipes and 2 pumps, each pump on an isolated cycle.

    Cycle C1 (2, 3, 4) shares node 4 with the overlapping cycles of the
    middle piece, so node 4 is split by the hybrid solver. Removing C1, C2
    (11..14) and their bridges leaves three pieces: nodes {1, 20..23},
    {5..10} plus the clone of node 4, and {15..19}.
    """
    edges = [_pipe(a, b, c) for (a, b), c in _HYBRID_PIPES]
    edges += [Edge("pump2-3", 2, 3, pump), Edge("pump11-12", 11, 12, pump)]
    return Network([Node(k) for k in range(1, 24)], edges, 1)


def _net2_layout():
    # a 2 x 7 ladder (6 overlapping cycles) with radial branches
    pipes = []
    top, bot = list(range(2, 9)), list(range(9, 16))
    for row in (top, bot):
        pipes += list(zip(row[:-1], row[1:]))
    pipes += list(zip(top, bot))
    branches = {3: 3, 5: 4, 8: 3, 10: 4, 12: 3, 15: 4}
    k = 16
    for root, length in branches.items():
        prev = root
        for _ in range(length):
            pipes.append((prev, k))
            prev, k = k, k + 1
    return pipes, k - 1


def net2_like(pump: Pump = BENCH_PUMP, seed: int = 2) -> tuple[Network, WfInput]:
    """Pump feeding a meshed network: 36 nodes, 40 pipes, 6 overlapping cycles.

    Node 1 is a reservoir (reference, 30 m) feeding node 2 through the pump;
    the remaining nodes draw a base demand totalling about 700 m^3/hr.
    Coefficients and demands are drawn from a fixed seed.
    """
    pipes, n = _net2_layout()
    rng = np.random.default_rng(seed)
    cs = rng.uniform(1e-4, 4e-4, len(pipes))
    nodes = [Node(1, NodeKind.RESERVOIR)] + [Node(k) for k in range(2, n + 1)]
    edges = [Edge("pump", 1, 2, pump)] + [_pipe(a, b, round(float(c), 7)) for (a, b), c in zip(pipes, cs)]
    net = Network(nodes, edges, 1)
    d = np.zeros(n)
    d[1:] = -np.round(rng.uniform(5.0, 35.0, n - 1), 2)
    d[0] = -d.sum()
    return net, WfInput(d, 30.0)
