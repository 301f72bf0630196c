"""Graph analysis: spanning trees, fundamental cycles, bridges, cycle
clusters, tree flow solves, node splitting and cycle contraction.

The spanning tree is grown breadth-first from the reference node, scanning
incident edges in network order, which makes every derived structure
deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError
from .network import Edge, LossyPipe, Network, Node, NodeKind


@dataclass(frozen=True)
class FundamentalCycle:
    generator: int  # off-tree edge index
    edges: tuple  # edge indices in traversal order, generator first
    indicator: np.ndarray  # +-1/0 per edge, oriented along the generator

    @property
    def support(self) -> frozenset:
        return frozenset(self.edges)


@dataclass(frozen=True, eq=False)
class CycleStructure:
    tree: frozenset
    cycles: tuple
    cycle_edges: frozenset
    bridges: frozenset
    overlap: frozenset  # pairs (i, j), i < j, of cycle indices sharing an edge
    parent_edge: tuple  # parent_edge[k] = tree edge to the parent of node k, -1 at the root
    order: tuple  # BFS order of node indices

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)

    def overlapping(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.overlap

    def clusters(self) -> list[list[int]]:
        """Groups of cycles connected through the overlap relation.

        Each group spans the cycle space of one biconnected block; a group
        with a single cycle is a block that is itself a simple cycle.
        """
        parent = list(range(self.n_cycles))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.overlap:
            parent[find(i)] = find(j)
        groups: dict[int, list[int]] = {}
        for i in range(self.n_cycles):
            groups.setdefault(find(i), []).append(i)
        return sorted(groups.values())

    def edge_cluster(self) -> dict[int, int]:
        """Map from cycle edge index to the index of its cluster in :meth:`clusters`."""
        out = {}
        for ci, group in enumerate(self.clusters()):
            for i in group:
                for p in self.cycles[i].edges:
                    out[p] = ci
        return out

    def indicator_matrix(self, n_edges: int) -> np.ndarray:
        if not self.cycles:
            return np.zeros((0, n_edges))
        return np.vstack([c.indicator for c in self.cycles])


def spanning_tree(net: Network, root: int | None = None, order: Sequence[int] | None = None):
    """BFS spanning tree. Returns ``(parent_edge, bfs_order)``.

    ``order`` optionally permutes the edge scan order (used to draw random
    trees in tests); by default edges are scanned in network order.
    """
    root = net.ref_index if root is None else root
    adj = net.adjacency()
    if order is not None:
        rank = {p: r for r, p in enumerate(order)}
        adj = [sorted(a, key=rank.__getitem__) for a in adj]
    parent = [-2] * net.n_nodes
    parent[root] = -1
    bfs = [root]
    queue = deque([root])
    while queue:
        k = queue.popleft()
        for p in adj[k]:
            j = net.other_end(p, k)
            if parent[j] == -2:
                parent[j] = p
                bfs.append(j)
                queue.append(j)
    return parent, bfs


def _path_to_root(net: Network, parent, k: int) -> list[tuple[int, int]]:
    """List of (edge, child node) from node k up to the root."""
    path = []
    while parent[k] >= 0:
        p = parent[k]
        path.append((p, k))
        k = net.other_end(p, k)
    return path


def analyze_cycles(net: Network, edge_order: Sequence[int] | None = None) -> CycleStructure:
    parent, bfs = spanning_tree(net, order=edge_order)
    tree = frozenset(p for p in parent if p >= 0)
    depth = [0] * net.n_nodes
    for k in bfs[1:]:
        depth[k] = depth[net.other_end(parent[k], k)] + 1

    cycles = []
    for p in range(net.n_edges):
        if p in tree:
            continue
        m, n = int(net.tails[p]), int(net.heads[p])
        # walk from head back to tail through the tree: cycle m -> n -> ... -> m
        up_n, up_m = [], []
        a, b = n, m
        while a != b:
            if depth[a] >= depth[b]:
                up_n.append((parent[a], a))
                a = net.other_end(parent[a], a)
            else:
                up_m.append((parent[b], b))
                b = net.other_end(parent[b], b)
        ind = np.zeros(net.n_edges)
        ind[p] = 1.0
        seq = [p]
        # from n up to the common ancestor: traversal goes child -> parent
        for e, child in up_n:
            ind[e] = 1.0 if net.tails[e] == child else -1.0
            seq.append(e)
        # from the common ancestor down to m: traversal goes parent -> child
        for e, child in reversed(up_m):
            ind[e] = 1.0 if net.heads[e] == child else -1.0
            seq.append(e)
        ind.setflags(write=False)
        cycles.append(FundamentalCycle(p, tuple(seq), ind))

    cycle_edges = frozenset(e for c in cycles for e in c.edges)
    bridges = frozenset(range(net.n_edges)) - cycle_edges
    members: dict[int, list[int]] = {}
    for i, c in enumerate(cycles):
        for e in c.edges:
            members.setdefault(e, []).append(i)
    overlap = set()
    for owners in members.values():
        for a in range(len(owners)):
            for b in range(a + 1, len(owners)):
                overlap.add((owners[a], owners[b]))
    return CycleStructure(tree, tuple(cycles), cycle_edges, bridges, frozenset(overlap),
                          tuple(parent), tuple(bfs))


def solve_tree_flows(n_nodes: int, tails: Sequence[int], heads: Sequence[int],
                     edges: Iterable[int], b: np.ndarray) -> dict[int, float]:
    """Flows on a forest so that net outflow at every node equals ``b``.

    Leaves are eliminated one at a time. Each tree of the forest must have
    balanced ``b``; the imbalance left at each tree's last node is ignored.
    """
    edges = list(edges)
    incident: list[list[int]] = [[] for _ in range(n_nodes)]
    for p in edges:
        incident[tails[p]].append(p)
        incident[heads[p]].append(p)
    remaining = [len(x) for x in incident]
    used = set()
    rest = np.array(b, dtype=float)
    flows: dict[int, float] = {}
    leaves = deque(k for k in range(n_nodes) if remaining[k] == 1)
    while leaves:
        k = leaves.popleft()
        if remaining[k] != 1:
            continue
        p = next(e for e in incident[k] if e not in used)
        used.add(p)
        # net outflow at k through p must equal rest[k]
        if tails[p] == k:
            flows[p] = rest[k]
            j = heads[p]
            rest[j] += rest[k]
        else:
            flows[p] = -rest[k]
            j = tails[p]
            rest[j] += rest[k]
        rest[k] = 0.0
        remaining[k] -= 1
        remaining[j] -= 1
        if remaining[j] == 1:
            leaves.append(j)
    if len(used) != len(edges):
        raise InputError("edge set passed to solve_tree_flows contains a cycle")
    return flows


def fix_noncycle_flows(net: Network, d: Sequence[float], cycles: CycleStructure | None = None,
                       ) -> dict[int, float]:
    """Flows on all bridge edges, identical across every mass-conserving flow.

    Off-tree flows are zeroed and the tree system is back-substituted.
    Keys are edge indices.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (net.n_nodes,):
        raise InputError(f"expected {net.n_nodes} injections, got {d.shape}")
    cs = cycles or analyze_cycles(net)
    f = solve_tree_flows(net.n_nodes, net.tails, net.heads, cs.tree, d)
    return {p: f[p] for p in sorted(cs.bridges)}


def particular_flow(net: Network, d: Sequence[float], cycles: CycleStructure | None = None) -> np.ndarray:
    """A mass-conserving flow vector with zero flow on all off-tree edges."""
    cs = cycles or analyze_cycles(net)
    f = np.zeros(net.n_edges)
    for p, v in solve_tree_flows(net.n_nodes, net.tails, net.heads, cs.tree, np.asarray(d, float)).items():
        f[p] = v
    return f


class TopologyClass(str, Enum):
    TREE = "Tree"
    NO_PUMPS = "NoPumps"
    PUMPS_NOT_IN_CYCLES = "PumpsNotInCycles"
    NON_OVERLAPPING_CYCLES = "NonOverlappingCycles"
    PUMPS_NOT_IN_OVERLAPPING_CYCLES = "PumpsNotInOverlappingCycles"
    UNSUPPORTED = "Unsupported"


def classify_topology(net: Network) -> TopologyClass:
    """Classify a network whose pumps are all running."""
    cs = analyze_cycles(net)
    if not cs.cycles:
        return TopologyClass.TREE
    pumps = net.pump_indices
    if not pumps:
        return TopologyClass.NO_PUMPS
    if not any(p in cs.cycle_edges for p in pumps):
        return TopologyClass.PUMPS_NOT_IN_CYCLES
    if not cs.overlap:
        return TopologyClass.NON_OVERLAPPING_CYCLES
    clusters = cs.clusters()
    where = cs.edge_cluster()
    if all(len(clusters[where[p]]) == 1 for p in pumps if p in where):
        return TopologyClass.PUMPS_NOT_IN_OVERLAPPING_CYCLES
    return TopologyClass.UNSUPPORTED


def classify(net: Network, statuses: Mapping | None = None, mode=None) -> TopologyClass:
    """Topology class after off pumps are removed (contracted by default)."""
    from .hydraulics import OffPumpMode, apply_off_pumps

    reduced = apply_off_pumps(net, statuses or {}, mode or OffPumpMode.CONTRACT)
    return classify_topology(reduced.network)


def pump_cycles(net: Network, cs: CycleStructure | None = None) -> list[int]:
    """Indices of fundamental cycles that carry at least one pump."""
    cs = cs or analyze_cycles(net)
    pumps = set(net.pump_indices)
    return [i for i, c in enumerate(cs.cycles) if pumps & set(c.edges)]


# ---------------------------------------------------------------------------
# Node splitting and contraction

@dataclass(frozen=True, eq=False)
class Contraction:
    """Reduced network plus the bookkeeping needed to map back.

    ``node_map`` sends every node id of the (split) source network to its
    node id in the reduced network; ``edge_map`` sends each surviving edge
    id to itself (edges keep their ids); ``internal_edges`` lists, per
    supernode id, the edge ids collapsed inside it.
    """

    network: Network
    split_network: Network
    node_map: dict
    supernodes: dict  # supernode id -> tuple of member node ids (in the split network)
    internal_edges: dict  # supernode id -> tuple of edge ids
    split_pairs: tuple  # (original node id, clone id, lossless edge id)

    def is_supernode(self, node_id) -> bool:
        return node_id in self.supernodes


def split_cycle_nodes(net: Network, cycle_edges: Iterable[int], cs: CycleStructure | None = None):
    """Detach a non-overlapping cycle from the other cycles through its nodes.

    Every node of the cycle that also lies on another cycle is split into
    itself and a clone joined by a lossless edge; all edges at the node
    other than its two cycle edges move to the clone. Returns the new
    network and a list of ``(node id, clone id, lossless edge id)``.
    """
    cs = cs or analyze_cycles(net)
    cycle = set(cycle_edges)
    on_cycle = {int(net.tails[p]) for p in cycle} | {int(net.heads[p]) for p in cycle}
    other_cycle_edges = cs.cycle_edges - cycle
    nodes = list(net.nodes)
    edges = list(net.edges)
    pairs = []
    node_ids = set(net.node_ids)
    edge_ids = set(net.edge_ids)
    for k in sorted(on_cycle):
        touching = net.incident(k)
        if not any(p in other_cycle_edges for p in touching):
            continue
        nid = net.nodes[k].id
        clone = _fresh(f"{nid}'", node_ids)
        node_ids.add(clone)
        nodes.append(Node(clone, NodeKind.JUNCTION, net.nodes[k].elevation))
        for p in touching:
            if p in cycle:
                continue
            e = edges[p]
            edges[p] = Edge(e.id, clone if e.tail == nid else e.tail, clone if e.head == nid else e.head, e.kind)
        link = _fresh(f"split:{nid}", edge_ids)
        edge_ids.add(link)
        edges.append(Edge(link, nid, clone, LossyPipe.lossless()))
        pairs.append((nid, clone, link))
    ref = net.reference
    return Network(nodes, edges, ref), pairs


def _fresh(base: str, taken) -> str:
    name = base
    i = 1
    while name in taken:
        name = f"{base}{i}"
        i += 1
    return name


def contract_supernodes(net: Network, cycles_to_contract: Sequence[Iterable[int]],
                        cs: CycleStructure | None = None) -> Contraction:
    """Replace each given cycle (edge indices of ``net``) by a supernode.

    Cycles must be pairwise non-overlapping and each must be a block on its
    own (no edge shared with any other cycle). Nodes shared with other
    cycles are split first.
    """
    cs = cs or analyze_cycles(net)
    groups = [frozenset(c) for c in cycles_to_contract]
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            if groups[i] & groups[j]:
                raise InputError("cannot contract overlapping cycles")
    # a cycle given here must not share edges with any other fundamental cycle
    for g in groups:
        for c in cs.cycles:
            inter = g & c.support
            if inter and c.support != g:
                raise InputError("cannot contract a cycle that overlaps another cycle")

    work = net
    pairs: list = []
    group_ids = [[net.edges[p].id for p in g] for g in groups]
    for gid in group_ids:
        idx = [work.edge_index(e) for e in gid]
        work, new_pairs = split_cycle_nodes(work, idx)
        pairs.extend(new_pairs)
    split_net = work

    node_map = {nid: nid for nid in split_net.node_ids}
    supernodes: dict = {}
    internal: dict = {}
    taken = set(split_net.node_ids)
    for gid in group_ids:
        members = []
        for e in gid:
            edge = split_net.edges[split_net.edge_index(e)]
            for v in (edge.tail, edge.head):
                if v not in members:
                    members.append(v)
        sname = _fresh("C[" + ",".join(map(str, members)) + "]", taken)
        taken.add(sname)
        for v in members:
            node_map[v] = sname
        supernodes[sname] = tuple(members)
        internal[sname] = tuple(gid)
    collapsed = {e for gid in group_ids for e in gid}
    new_nodes = []
    seen = set()
    for n in split_net.nodes:
        tgt = node_map[n.id]
        if tgt in seen:
            continue
        seen.add(tgt)
        if tgt == n.id:
            new_nodes.append(n)
        else:
            new_nodes.append(Node(tgt, NodeKind.JUNCTION, n.elevation))
    new_edges = [Edge(e.id, node_map[e.tail], node_map[e.head], e.kind)
                 for e in split_net.edges if e.id not in collapsed]
    ref = node_map[split_net.reference]
    reduced = Network(new_nodes, new_edges, ref)
    return Contraction(reduced, split_net, node_map, supernodes, internal, tuple(pairs))


def components_without(net: Network, removed_nodes: Iterable[int] = (), removed_edges: Iterable[int] = ()):
    """Connected components (node index lists, edge index lists) after removals."""
    rn = set(removed_nodes)
    re_ = set(removed_edges)
    adj: list[list[int]] = [[] for _ in range(net.n_nodes)]
    for p in range(net.n_edges):
        if p in re_:
            continue
        m, n = int(net.tails[p]), int(net.heads[p])
        if m in rn or n in rn:
            continue
        adj[m].append(p)
        adj[n].append(p)
    seen = set(rn)
    comps = []
    for s in range(net.n_nodes):
        if s in seen:
            continue
        seen.add(s)
        nodes = [s]
        edges = set()
        queue = deque([s])
        while queue:
            k = queue.popleft()
            for p in adj[k]:
                edges.add(p)
                j = net.other_end(p, k)
                if j not in seen:
                    seen.add(j)
                    nodes.append(j)
                    queue.append(j)
        comps.append((sorted(nodes), sorted(edges)))
    return comps


def subnetwork(net: Network, node_idx: Sequence[int], edge_idx: Sequence[int], reference=None) -> Network:
    nodes = [net.nodes[k] for k in sorted(node_idx)]
    edges = [net.edges[p] for p in sorted(edge_idx)]
    if reference is None:
        ids = {n.id for n in nodes}
        reference = net.reference if net.reference in ids else nodes[0].id
    return Network(nodes, edges, reference)
