"""Reader for a subset of the EPANET INP format.

Supported sections are ``[JUNCTIONS]``, ``[RESERVOIRS]``, ``[TANKS]``,
``[PIPES]``, ``[PUMPS]``, ``[CURVES]`` (pump head curves only),
``[DEMANDS]`` and ``[OPTIONS]`` (``UNITS`` and ``HEADLOSS``). Other
sections are skipped with a warning.

Units are converted to meters and m^3/hr. Pipe resistances follow from
the head-loss option:

* ``D-W`` (roughness in mm, or millifeet in US units): Darcy-Weisbach with
  the fully rough friction factor ``f = 0.25 / log10(eps / (3.7 D))^2``,
  giving ``c = 8 f L / (pi^2 g D^5) / 3600^2``.
* ``H-W`` (the default): with ``keep_hazen_williams`` the pipe keeps the
  exponent 1.852 and ``c = 10.67 L / (C^1.852 D^4.87) / 3600^1.852``;
  otherwise a quadratic law is matched to the Hazen-Williams drop at a
  velocity of 1 m/s, ``c = h_HW(Q1) / Q1^2`` with ``Q1`` the 1 m/s flow.

Pumps need a head curve: one point ``(q, h)`` gives the standard EPANET
fit ``h = 4/3 h0 - (h0 / (3 q^2)) Q^2``, three points are fitted exactly
by a quadratic. Demands are negated into injections and the first
reservoir (or tank if none) becomes the reference node; the total demand
is supplied from it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParseError
from ..network import Edge, LossyPipe, Network, Node, NodeKind, Pump, WfInput

log = logging.getLogger(__name__)

G = 9.81
# flow unit -> m^3/hr
FLOW_UNITS = {"CFS": 101.9406, "GPM": 0.2271247, "MGD": 157.7255, "IMGD": 189.4205, "AFD": 51.39667,
              "LPS": 3.6, "LPM": 0.06, "MLD": 41.66667, "CMH": 1.0, "CMD": 1.0 / 24.0}
US_UNITS = {"CFS", "GPM", "MGD", "IMGD", "AFD"}
FT = 0.3048
SUPPORTED = {"JUNCTIONS", "RESERVOIRS", "TANKS", "PIPES", "PUMPS", "CURVES", "DEMANDS", "OPTIONS"}


@dataclass
class InpModel:
    network: Network
    base_demands: dict  # node id -> demand (m^3/hr, positive draws water)
    input: WfInput
    warnings: list = field(default_factory=list)


def _rows(text: str):
    section = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {line!r}", ln)
            section = line[1:-1].strip().upper()
            yield ln, section, None
            continue
        if section is None:
            raise ParseError("data before the first section", ln)
        yield ln, section, line.split()


def _num(tok: str, ln: int, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"{what}: {tok!r} is not a number", ln) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} must be finite", ln)
    return v


def _need(tok: list, n: int, ln: int, what: str):
    if len(tok) < n:
        raise ParseError(f"{what} row needs at least {n} fields, got {len(tok)}", ln)


def darcy_c(length: float, diameter: float, roughness: float) -> float:
    """Quadratic coefficient in m/(m^3/hr)^2 (lengths in m, roughness in m)."""
    f = 0.25 / math.log10(roughness / (3.7 * diameter)) ** 2
    return 8.0 * f * length / (math.pi**2 * G * diameter**5) / 3600.0**2


def hazen_c(length: float, diameter: float, coeff: float, keep_exponent: bool = False) -> tuple[float, float]:
    """``(c, rho)`` for a Hazen-Williams pipe with flows in m^3/hr."""
    k = 10.67 * length / (coeff**1.852 * diameter**4.87)  # flows in m^3/s
    if keep_exponent:
        return k / 3600.0**1.852, 1.852
    q1 = math.pi * diameter**2 / 4.0  # m^3/s at 1 m/s
    return k * q1**1.852 / (q1 * 3600.0) ** 2, 2.0


def _pump_from_curve(points, ln: int, f_range) -> Pump:
    pts = sorted(points)
    if len(pts) == 1:
        q, h = pts[0]
        lam, mu, nu = -h / (3.0 * q * q), 0.0, 4.0 * h / 3.0
    elif len(pts) == 3:
        lam, mu, nu = np.polyfit([p[0] for p in pts], [p[1] for p in pts], 2)
        if mu < 0:
            raise ParseError("pump curve fit has a negative linear term; not supported", ln)
    else:
        raise ParseError(f"pump curves need 1 or 3 points, got {len(pts)}", ln)
    lo, hi = f_range if f_range else (0.0, math.inf)
    return Pump(float(lam), float(mu), float(nu), lo, hi)


def parse_inp(text: str, keep_hazen_williams: bool = False, pump_flow_range=None) -> InpModel:
    """Parse INP text into a network, base demands and the matching input."""
    warnings: list[str] = []
    rows = list(_rows(text))
    units, headloss = "GPM", "H-W"
    for ln, sec, tok in rows:
        if sec == "OPTIONS" and tok:
            key = tok[0].upper()
            if key == "UNITS" and len(tok) > 1:
                units = tok[1].upper()
            elif key == "HEADLOSS" and len(tok) > 1:
                headloss = tok[1].upper()
            if units not in FLOW_UNITS:
                raise ParseError(f"unknown flow units {units!r}", ln)
            if headloss not in ("H-W", "D-W"):
                raise ParseError(f"head-loss model {headloss!r} is not supported", ln)
    qs = FLOW_UNITS[units]
    us = units in US_UNITS
    lunit = FT if us else 1.0
    dunit = 0.0254 if us else 1e-3

    nodes: dict = {}
    where: dict = {}
    demand: dict = {}
    curves: dict = {}
    links = []

    def add_node(nid, kind, elev, ln):
        if nid in nodes:
            raise ParseError(f"duplicate node id {nid!r} (lines {where[nid]} and {ln})", ln)
        nodes[nid] = Node(nid, kind, elev * lunit)
        where[nid] = ln

    skipped = set()
    for ln, sec, tok in rows:
        if tok is None:
            if sec not in SUPPORTED and sec != "END" and sec not in skipped:
                skipped.add(sec)
                warnings.append(f"line {ln}: section [{sec}] ignored")
            continue
        if sec == "JUNCTIONS":
            _need(tok, 2, ln, "junction")
            add_node(tok[0], NodeKind.JUNCTION, _num(tok[1], ln, "elevation"), ln)
            if len(tok) > 2:
                demand[tok[0]] = demand.get(tok[0], 0.0) + _num(tok[2], ln, "demand") * qs
        elif sec == "RESERVOIRS":
            _need(tok, 2, ln, "reservoir")
            add_node(tok[0], NodeKind.RESERVOIR, _num(tok[1], ln, "head"), ln)
        elif sec == "TANKS":
            _need(tok, 2, ln, "tank")
            add_node(tok[0], NodeKind.TANK, _num(tok[1], ln, "elevation"), ln)
        elif sec == "DEMANDS":
            _need(tok, 2, ln, "demand")
            demand[tok[0]] = demand.get(tok[0], 0.0) + _num(tok[1], ln, "demand") * qs
            where.setdefault(("demand", tok[0]), ln)
        elif sec == "CURVES":
            _need(tok, 3, ln, "curve")
            curves.setdefault(tok[0], []).append((_num(tok[1], ln, "curve flow") * qs,
                                                  _num(tok[2], ln, "curve head") * lunit))
        elif sec == "PIPES":
            _need(tok, 6, ln, "pipe")
            if len(tok) > 7 and tok[7].upper() == "CLOSED":
                warnings.append(f"line {ln}: closed pipe {tok[0]!r} dropped")
                continue
            links.append(("pipe", ln, tok))
        elif sec == "PUMPS":
            _need(tok, 4, ln, "pump")
            links.append(("pump", ln, tok))

    edges = []
    seen: dict = {}
    for kind, ln, tok in links:
        eid, a, b = tok[0], tok[1], tok[2]
        if eid in seen:
            raise ParseError(f"duplicate link id {eid!r} (lines {seen[eid]} and {ln})", ln)
        seen[eid] = ln
        for nid in (a, b):
            if nid not in nodes:
                raise ParseError(f"link {eid!r} references unknown node {nid!r}", ln)
        if kind == "pipe":
            length = _num(tok[3], ln, "length") * lunit
            diam = _num(tok[4], ln, "diameter") * dunit
            rough = _num(tok[5], ln, "roughness")
            if min(length, diam, rough) <= 0:
                raise ParseError(f"pipe {eid!r}: length, diameter and roughness must be positive", ln)
            if headloss == "D-W":
                c, rho = darcy_c(length, diam, rough * (FT * 1e-3 if us else 1e-3)), 2.0
            else:
                c, rho = hazen_c(length, diam, rough, keep_hazen_williams)
            edges.append(Edge(eid, a, b, LossyPipe(c, rho)))
        else:
            opts = [t.upper() for t in tok[3:]]
            if "HEAD" not in opts or opts.index("HEAD") + 1 >= len(opts):
                raise ParseError(f"pump {eid!r} needs a HEAD curve", ln)
            cid = tok[3 + opts.index("HEAD") + 1]
            if cid not in curves:
                raise ParseError(f"pump {eid!r} references unknown curve {cid!r}", ln)
            edges.append(Edge(eid, a, b, _pump_from_curve(curves[cid], ln, pump_flow_range)))

    for key, ln in where.items():
        if isinstance(key, tuple) and key[1] not in nodes:
            raise ParseError(f"demand for unknown node {key[1]!r}", ln)
    if not nodes:
        raise ParseError("no nodes defined")
    sources = [n for n in nodes.values() if n.kind is NodeKind.RESERVOIR] or \
              [n for n in nodes.values() if n.kind is NodeKind.TANK]
    if not sources:
        raise ParseError("no reservoir or tank to serve as reference")
    ref = sources[0]
    if len([n for n in nodes.values() if n.kind is not NodeKind.JUNCTION]) > 1:
        warnings.append("only one fixed-pressure node is supported; others are treated as junctions")
    net = Network(list(nodes.values()), edges, ref.id)
    d = np.array([-demand.get(n.id, 0.0) for n in net.nodes])
    d[net.ref_index] -= d.sum()
    inp = WfInput(d, ref.elevation)
    for w in warnings:
        log.warning(w)
    return InpModel(net, dict(demand), inp, warnings)


def read_inp(path, **kw) -> InpModel:
    with open(path, encoding="utf-8") as fh:
        return parse_inp(fh.read(), **kw)
