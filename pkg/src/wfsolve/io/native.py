"""Native network file: a versioned JSON document.

Layout (``version`` 1)::

    {
      "format": "wfsolve-network",
      "version": 1,
      "nodes": [{"id": 1, "kind": "junction", "elevation": 0.0}, ...],
      "pipes": [{"id": "1-2", "tail": 1, "head": 2, "c": 5e-05, "rho": 2.0}, ...],
      "pumps": [{"id": "p", "tail": 1, "head": 4, "lambda": -2.7e-05, "mu": 0.0129,
                 "nu": 55.83, "speed": 1.0, "f_min": 250.0, "f_max": 1500.0}, ...],
      "reference": {"node": 1, "pressure": 10.0},
      "injections": [[1, 36.0], [2, -20.0], ...],
      "pump_status": [["p", true]],
      "meta": {...}
    }

Node ids may be integers or strings. Injections are ``[id, value]`` pairs
(and pump statuses ``[id, bool]`` pairs) so integer ids survive the round
trip; missing nodes inject zero.
``f_max`` may be ``null`` for an unbounded pump. ``pump_status`` and
``meta`` are optional; ``meta`` is carried through unchanged.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from ..errors import InputError, ParseError
from ..network import Edge, LossyPipe, Network, Node, NodeKind, Pump, WfInput

FORMAT = "wfsolve-network"
VERSION = 1


def _finite_or_none(x: float):
    return None if math.isinf(x) else float(x)


def to_document(net: Network, inp: WfInput | None = None, meta: dict | None = None) -> dict:
    """Canonical document for a network and optional input."""
    doc = {"format": FORMAT, "version": VERSION,
           "nodes": [{"id": n.id, "kind": NodeKind(n.kind).value, "elevation": float(n.elevation)}
                     for n in net.nodes],
           "pipes": [], "pumps": []}
    for e in net.edges:
        k = e.kind
        if e.is_pump:
            doc["pumps"].append({"id": e.id, "tail": e.tail, "head": e.head, "lambda": k.lam, "mu": k.mu_bar,
                                 "nu": k.nu_bar, "speed": 1.0, "f_min": k.f_min, "f_max": _finite_or_none(k.f_max)})
        else:
            if k.is_lossless:
                raise InputError(f"edge {e.id!r}: internal lossless links cannot be saved")
            doc["pipes"].append({"id": e.id, "tail": e.tail, "head": e.head, "c": k.c, "rho": k.rho})
    pressure = inp.reference_pressure if inp is not None else 0.0
    doc["reference"] = {"node": net.reference, "pressure": float(pressure)}
    if inp is not None:
        inp.check(net)
        doc["injections"] = [[n.id, float(v)] for n, v in zip(net.nodes, inp.injections)]
        if inp.pump_status:
            doc["pump_status"] = [[k, bool(v)] for k, v in inp.pump_status.items()]
    if meta:
        doc["meta"] = meta
    return doc


def _get(obj: dict, key: str, where: str):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise ParseError(f"{where}: missing field {key!r}") from None


def from_document(doc: dict) -> tuple[Network, WfInput, dict]:
    """Parse a document into ``(network, input, meta)``."""
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ParseError(f"not a {FORMAT} document")
    if doc.get("version") != VERSION:
        raise ParseError(f"unsupported version {doc.get('version')!r}")
    try:
        nodes = [Node(_get(n, "id", "node"), NodeKind(n.get("kind", "junction")), float(n.get("elevation", 0.0)))
                 for n in _get(doc, "nodes", "document")]
        edges = []
        for p in doc.get("pipes", []):
            where = f"pipe {p.get('id')!r}"
            edges.append(Edge(_get(p, "id", where), _get(p, "tail", where), _get(p, "head", where),
                              LossyPipe(float(_get(p, "c", where)), float(p.get("rho", 2.0)))))
        for p in doc.get("pumps", []):
            where = f"pump {p.get('id')!r}"
            f_max = p.get("f_max")
            pump = Pump.from_speed(float(_get(p, "lambda", where)), float(_get(p, "mu", where)),
                                   float(_get(p, "nu", where)), float(p.get("speed", 1.0)),
                                   float(p.get("f_min", 0.0)), math.inf if f_max is None else float(f_max))
            edges.append(Edge(_get(p, "id", where), _get(p, "tail", where), _get(p, "head", where), pump))
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise ParseError(str(exc)) from None
    ref = _get(doc, "reference", "document")
    net = Network(nodes, edges, _get(ref, "node", "reference"))
    inj = {}
    for pair in doc.get("injections", []):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(f"injection entry {pair!r} is not an [id, value] pair")
        if pair[0] in inj:
            raise ParseError(f"duplicate injection for node {pair[0]!r}")
        net.node_index(pair[0])
        inj[pair[0]] = float(pair[1])
    status = {}
    for pair in doc.get("pump_status", []):
        if not isinstance(pair, list) or len(pair) != 2 or not isinstance(pair[1], bool):
            raise ParseError(f"pump status entry {pair!r} is not an [id, bool] pair")
        status[pair[0]] = pair[1]
    inp = WfInput.from_mapping(net, inj, float(ref.get("pressure", 0.0)), status)
    return net, inp, dict(doc.get("meta", {}))


def dumps(net: Network, inp: WfInput | None = None, meta: dict | None = None) -> str:
    return json.dumps(to_document(net, inp, meta), indent=2) + "\n"


def loads(text: str) -> tuple[Network, WfInput, dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    return from_document(doc)


def save(path, net: Network, inp: WfInput | None = None, meta: dict | None = None) -> None:
    Path(path).write_text(dumps(net, inp, meta), encoding="utf-8")


def load(path) -> tuple[Network, WfInput, dict]:
    return loads(Path(path).read_text(encoding="utf-8"))
