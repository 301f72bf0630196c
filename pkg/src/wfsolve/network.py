"""Network data model, incidence algebra and mass conservation.

Sign conventions: an edge ``(tail, head)`` carries positive flow from tail to
head; injections are positive for supply and negative for consumption.
Units are m^3/hr for flow and meters of head for pressure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any, Hashable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DisconnectedNetworkError, InputError

NodeId = Hashable
EdgeId = Hashable


class NodeKind(str, Enum):
    JUNCTION = "junction"
    RESERVOIR = "reservoir"
    TANK = "tank"


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: NodeKind = NodeKind.JUNCTION
    elevation: float = 0.0


@dataclass(frozen=True)
class LossyPipe:
    """Pipe with head drop ``c * sign(f) * |f|**rho``.

    ``c == 0`` is reserved for the internal lossless edges created by node
    splitting; such pipes must be built with :meth:`lossless`.
    """

    c: float
    rho: float = 2.0
    internal: bool = False

    def __post_init__(self):
        if not np.isfinite(self.c) or not np.isfinite(self.rho):
            raise InputError("pipe parameters must be finite")
        if self.rho <= 0:
            raise InputError(f"flow exponent must be positive, got {self.rho}")
        if self.c < 0 or (self.c == 0 and not self.internal):
            raise InputError(f"head-loss coefficient must be positive, got {self.c}")

    @classmethod
    def lossless(cls) -> "LossyPipe":
        return cls(0.0, 2.0, internal=True)

    @property
    def is_lossless(self) -> bool:
        return self.c == 0.0


@dataclass(frozen=True)
class Pump:
    """Fixed-speed pump with gain ``lam*f**2 + mu_bar*f + nu_bar``.

    Speeds are folded into ``mu_bar`` and ``nu_bar``. The gain must be
    strictly decreasing on ``[f_min, f_max]``.
    """

    lam: float
    mu_bar: float
    nu_bar: float
    f_min: float = 0.0
    f_max: float = float("inf")

    def __post_init__(self):
        if not self.lam < 0:
            raise InputError(f"pump curvature lambda must be negative, got {self.lam}")
        if self.mu_bar < 0 or self.nu_bar < 0:
            raise InputError("pump coefficients mu_bar and nu_bar must be non-negative")
        if not 0 <= self.f_min <= self.f_max:
            raise InputError(f"pump flow range [{self.f_min}, {self.f_max}] is not ordered")
        if 2 * self.lam * self.f_min + self.mu_bar > 0:
            raise InputError(
                "pump gain is not strictly decreasing on its flow range "
                f"(2*lambda*f_min + mu_bar = {2 * self.lam * self.f_min + self.mu_bar:.4g} > 0)"
            )

    @classmethod
    def from_speed(cls, lam, mu, nu, speed=1.0, f_min=0.0, f_max=float("inf")) -> "Pump":
        return cls(lam, mu * speed, nu * speed**2, f_min, f_max)


EdgeKind = Union[LossyPipe, Pump]


@dataclass(frozen=True)
class Edge:
    id: EdgeId
    tail: NodeId
    head: NodeId
    kind: EdgeKind

    @property
    def is_pump(self) -> bool:
        return isinstance(self.kind, Pump)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable directed multigraph of lossy pipes and pumps.

    Validated once at construction: unique ids, known endpoints, no
    self-loops, connected as an undirected graph, existing reference node.
    """

    nodes: tuple
    edges: tuple
    reference: NodeId
    _node_index: dict = field(init=False, repr=False)
    _edge_index: dict = field(init=False, repr=False)

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge], reference: NodeId):
        nodes = tuple(n if isinstance(n, Node) else Node(n) for n in nodes)
        edges = tuple(edges)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "reference", reference)
        node_index: dict = {}
        for k, n in enumerate(nodes):
            if n.id in node_index:
                raise InputError(f"duplicate node id {n.id!r}")
            node_index[n.id] = k
        edge_index: dict = {}
        for p, e in enumerate(edges):
            if e.id in edge_index:
                raise InputError(f"duplicate edge id {e.id!r}")
            if e.tail not in node_index or e.head not in node_index:
                raise InputError(f"edge {e.id!r} references an unknown node")
            if e.tail == e.head:
                raise InputError(f"edge {e.id!r} is a self-loop")
            edge_index[e.id] = p
        if reference not in node_index:
            raise InputError(f"reference node {reference!r} does not exist")
        object.__setattr__(self, "_node_index", node_index)
        object.__setattr__(self, "_edge_index", edge_index)
        tails = np.array([node_index[e.tail] for e in edges], dtype=int)
        heads = np.array([node_index[e.head] for e in edges], dtype=int)
        object.__setattr__(self, "tails", _readonly(tails))
        object.__setattr__(self, "heads", _readonly(heads))
        comps = self._components()
        if len(comps) > 1:
            raise DisconnectedNetworkError([[nodes[k].id for k in c] for c in comps])

    def _components(self) -> list[list[int]]:
        parent = list(range(len(self.nodes)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for t, h in zip(self.tails, self.heads):
            ra, rb = find(int(t)), find(int(h))
            if ra != rb:
                parent[ra] = rb
        groups: dict[int, list[int]] = {}
        for k in range(len(self.nodes)):
            groups.setdefault(find(k), []).append(k)
        return sorted(groups.values())

    # sizes and lookups
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def node_ids(self) -> list:
        return [n.id for n in self.nodes]

    @property
    def edge_ids(self) -> list:
        return [e.id for e in self.edges]

    def node_index(self, node_id: NodeId) -> int:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise InputError(f"unknown node {node_id!r}") from None

    def edge_index(self, edge_id: EdgeId) -> int:
        try:
            return self._edge_index[edge_id]
        except KeyError:
            raise InputError(f"unknown edge {edge_id!r}") from None

    def has_node(self, node_id: NodeId) -> bool:
        return node_id in self._node_index

    @property
    def ref_index(self) -> int:
        return self._node_index[self.reference]

    @property
    def pump_indices(self) -> list[int]:
        return [p for p, e in enumerate(self.edges) if e.is_pump]

    @property
    def pipe_indices(self) -> list[int]:
        return [p for p, e in enumerate(self.edges) if not e.is_pump]

    @property
    def has_pumps(self) -> bool:
        return any(e.is_pump for e in self.edges)

    def incident(self, k: int) -> list[int]:
        """Edge indices touching node index ``k``, in edge order."""
        return [p for p in range(self.n_edges) if self.tails[p] == k or self.heads[p] == k]

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.nodes]
        for p in range(self.n_edges):
            adj[self.tails[p]].append(p)
            adj[self.heads[p]].append(p)
        return adj

    def other_end(self, p: int, k: int) -> int:
        return int(self.heads[p]) if self.tails[p] == k else int(self.tails[p])

    def coefficients(self) -> np.ndarray:
        """Head-loss coefficients per edge (NaN on pumps)."""
        return np.array([np.nan if e.is_pump else e.kind.c for e in self.edges])

    def exponents(self) -> np.ndarray:
        return np.array([np.nan if e.is_pump else e.kind.rho for e in self.edges])

    def with_reference(self, reference: NodeId) -> "Network":
        return Network(self.nodes, self.edges, reference)

    def __repr__(self):
        return f"Network(N={self.n_nodes}, P={self.n_edges}, pumps={len(self.pump_indices)}, ref={self.reference!r})"


@dataclass(frozen=True, eq=False)
class WfInput:
    """Water-flow problem data: injections (network node order), reference
    pressure, and pump on/off statuses keyed by edge id (missing means on)."""

    injections: np.ndarray
    reference_pressure: float = 0.0
    pump_status: Mapping[EdgeId, bool] = field(default_factory=dict)

    def __post_init__(self):
        d = np.array(self.injections, dtype=float)
        if d.ndim != 1:
            raise InputError("injections must be a vector")
        if not np.all(np.isfinite(d)):
            raise InputError("injections must be finite")
        tol = balance_tolerance(d)
        if abs(d.sum()) > tol:
            raise InputError(f"injections do not balance: sum = {d.sum():.6g} (tolerance {tol:.3g})")
        object.__setattr__(self, "injections", _readonly(d))
        object.__setattr__(self, "reference_pressure", float(self.reference_pressure))
        object.__setattr__(self, "pump_status", MappingProxyType(dict(self.pump_status)))

    @classmethod
    def from_mapping(cls, net: Network, injections: Mapping[NodeId, float], reference_pressure=0.0,
                     pump_status: Mapping[EdgeId, bool] | None = None) -> "WfInput":
        d = np.zeros(net.n_nodes)
        for nid, v in injections.items():
            d[net.node_index(nid)] = v
        status = dict(pump_status or {})
        for eid in status:
            if not net.edges[net.edge_index(eid)].is_pump:
                raise InputError(f"status given for non-pump edge {eid!r}")
        return cls(d, reference_pressure, status)

    def is_on(self, edge_id: EdgeId) -> bool:
        return bool(self.pump_status.get(edge_id, True))

    def check(self, net: Network) -> None:
        if self.injections.shape != (net.n_nodes,):
            raise InputError(
                f"injection vector has {self.injections.size} entries, network has {net.n_nodes} nodes")

    def replace(self, **kw) -> "WfInput":
        args = dict(injections=self.injections, reference_pressure=self.reference_pressure,
                    pump_status=dict(self.pump_status))
        args.update(kw)
        return WfInput(**args)


def balance_tolerance(d: np.ndarray) -> float:
    return 1e-8 * max(1.0, float(np.max(np.abs(d))) if d.size else 1.0)


@dataclass(frozen=True, eq=False)
class WfSolution:
    flows: np.ndarray
    pressures: np.ndarray
    residual_mass: float
    residual_edges: np.ndarray
    solver_tag: str
    status: str = "solved"
    warnings: tuple = ()
    info: dict = field(default_factory=dict)

    @property
    def max_edge_residual(self) -> float:
        return float(np.max(self.residual_edges)) if self.residual_edges.size else 0.0

    def flow_map(self, net: Network) -> dict:
        return {e.id: float(f) for e, f in zip(net.edges, self.flows)}

    def pressure_map(self, net: Network) -> dict:
        return {n.id: float(h) for n, h in zip(net.nodes, self.pressures)}

    def elevated(self, net: Network) -> np.ndarray:
        """Pressures minus node elevations (pressure head above ground)."""
        return self.pressures - np.array([n.elevation for n in net.nodes])


def build_incidence(net: Network) -> np.ndarray:
    """P x N matrix with +1 at the tail and -1 at the head of every edge."""
    A = np.zeros((net.n_edges, net.n_nodes))
    rows = np.arange(net.n_edges)
    A[rows, net.tails] = 1.0
    A[rows, net.heads] = -1.0
    return A


def mass_residual(net: Network, f: Sequence[float], d: Sequence[float]) -> np.ndarray:
    """Returns ``A^T f - d``."""
    f = np.asarray(f, dtype=float)
    d = np.asarray(d, dtype=float)
    if f.shape != (net.n_edges,):
        raise InputError(f"flow vector has shape {f.shape}, expected ({net.n_edges},)")
    if d.shape != (net.n_nodes,):
        raise InputError(f"injection vector has shape {d.shape}, expected ({net.n_nodes},)")
    r = -d.copy()
    np.add.at(r, net.tails, f)
    np.add.at(r, net.heads, -f)
    return r


def flow_oriented_incidence(net: Network, f: Sequence[float]) -> np.ndarray:
    """Incidence matrix with each row oriented along the sign of its flow.

    Rows with zero flow keep the default edge direction.
    """
    f = np.asarray(f, dtype=float)
    A = build_incidence(net)
    A[f < 0] *= -1.0
    return A


def as_edge_vector(net: Network, values: Mapping[EdgeId, Any] | Sequence[float]) -> np.ndarray:
    if isinstance(values, Mapping):
        out = np.zeros(net.n_edges)
        for k, v in values.items():
            out[net.edge_index(k)] = v
        return out
    out = np.asarray(values, dtype=float)
    if out.shape != (net.n_edges,):
        raise InputError(f"expected {net.n_edges} edge values, got {out.shape}")
    return out
