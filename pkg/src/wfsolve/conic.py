"""Line-oriented text format for conic (and mixed-binary conic) models.

One statement per line, ``#`` starts a comment::

    VAR name                      continuous variable
    BIN name                      binary variable
    EQ  c1 v1 c2 v2 ... = rhs     linear equality
    INEQ c1 v1 ... <= rhs         linear inequality
    RCONE a x b                   rotated cone x^2 <= a*b, a >= 0, b >= 0
    QCUT q v^2 c1 v1 ... <= rhs   convex quadratic row, q >= 0
    OBJ c1 v1 c2 v2 ...           linear objective (minimised)

Terms are written as ``coefficient name``. In ``RCONE`` each slot is a
variable name or a numeric constant. Numbers use Python's shortest
round-trip repr, so ``parse(text).to_text() == text`` for canonical text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError

HEADER = "# wfsolve conic model v1"


def _num(x: float) -> str:
    return repr(float(x))


def _terms(coeffs) -> str:
    return " ".join(f"{_num(c)} {v}" for v, c in coeffs)


@dataclass
class ConicModel:
    variables: list = field(default_factory=list)
    binaries: list = field(default_factory=list)
    equalities: list = field(default_factory=list)  # (terms, rhs); terms = [(var, coef)]
    inequalities: list = field(default_factory=list)  # (terms, rhs) meaning <=
    rcones: list = field(default_factory=list)  # (a, x, b): names or floats
    qcuts: list = field(default_factory=list)  # (quad var, q, terms, rhs)
    objective: list = field(default_factory=list)  # [(var, coef)]
    comments: list = field(default_factory=list)

    def var(self, name: str) -> str:
        self.variables.append(name)
        return name

    @property
    def n_rows(self) -> int:
        return len(self.equalities) + len(self.inequalities) + len(self.rcones) + len(self.qcuts)

    def to_text(self) -> str:
        lines = [HEADER]
        lines += [f"# {c}" for c in self.comments]
        lines += [f"VAR {v}" for v in self.variables]
        lines += [f"BIN {v}" for v in self.binaries]
        for terms, rhs in self.equalities:
            lines.append(f"EQ {_terms(terms)} = {_num(rhs)}")
        for terms, rhs in self.inequalities:
            lines.append(f"INEQ {_terms(terms)} <= {_num(rhs)}")
        for a, x, b in self.rcones:
            slots = [s if isinstance(s, str) else _num(s) for s in (a, x, b)]
            lines.append("RCONE " + " ".join(slots))
        for v, q, terms, rhs in self.qcuts:
            body = f"{_num(q)} {v}^2" + (" " + _terms(terms) if terms else "")
            lines.append(f"QCUT {body} <= {_num(rhs)}")
        if self.objective:
            lines.append(f"OBJ {_terms(self.objective)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ConicModel":
        m = cls()
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line != HEADER:
                    m.comments.append(line[1:].strip())
                continue
            kw, _, rest = line.partition(" ")
            tok = rest.split()
            try:
                if kw == "VAR":
                    m.variables.append(_one(tok, ln))
                elif kw == "BIN":
                    m.binaries.append(_one(tok, ln))
                elif kw in ("EQ", "INEQ"):
                    sep = "=" if kw == "EQ" else "<="
                    if len(tok) < 2 or tok[-2] != sep:
                        raise ParseError(f"{kw} row must end with '{sep} rhs'", ln)
                    row = (_pairs(tok[:-2], ln), float(tok[-1]))
                    (m.equalities if kw == "EQ" else m.inequalities).append(row)
                elif kw == "RCONE":
                    if len(tok) != 3:
                        raise ParseError("RCONE takes exactly three slots", ln)
                    m.rcones.append(tuple(_slot(t) for t in tok))
                elif kw == "QCUT":
                    if len(tok) < 4 or tok[-2] != "<=" or not tok[1].endswith("^2"):
                        raise ParseError("QCUT must read 'q v^2 [terms] <= rhs'", ln)
                    m.qcuts.append((tok[1][:-2], float(tok[0]), _pairs(tok[2:-2], ln), float(tok[-1])))
                elif kw == "OBJ":
                    m.objective = _pairs(tok, ln)
                else:
                    raise ParseError(f"unknown statement {kw!r}", ln)
            except ValueError as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(str(exc), ln) from None
        return m


def _one(tok, ln):
    if len(tok) != 1:
        raise ParseError("expected a single name", ln)
    return tok[0]


def _pairs(tok, ln):
    if len(tok) % 2:
        raise ParseError("terms must come as 'coefficient name' pairs", ln)
    return [(tok[i + 1], float(tok[i])) for i in range(0, len(tok), 2)]


def _slot(t: str):
    try:
        return float(t)
    except ValueError:
        return t
