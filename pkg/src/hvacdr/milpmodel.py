"""Mixed-integer linear model container and CPLEX-style LP text round trip.

The model is a plain list of bounded columns and linear rows plus a
minimize objective.  A registry maps structured symbol keys (tuples like
("P", t) or ("q", zone, t, layer, neuron, block)) to column indices so
solutions can be decoded without string parsing.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, RejectedInputError

SENSES = ("L", "E", "G")          # <=, =, >=
_SENSE_TO_TEXT = {"L": "<=", "E": "=", "G": ">="}
_TEXT_TO_SENSE = {"<=": "L", "=<": "L", "=": "E", ">=": "G", "=>": "G",
                  "<": "L", ">": "G"}


def _fmt(v: float) -> str:
    """17-significant-digit decimal; round-trips exactly through float()."""
    if v == 0:
        v = 0.0                   # never emit -0
    return format(float(v), ".17g")


@dataclass
class Row:
    name: str
    idx: np.ndarray
    val: np.ndarray
    sense: str
    rhs: float


class MilpModel:
    """Bounded variables, linear rows, a minimize objective, a registry."""

    def __init__(self, name="model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_binary: list[bool] = []
        self.rows: list[Row] = []
        self.obj: dict[int, float] = {}
        self.obj_offset = 0.0
        self.registry: dict[tuple, int] = {}
        self._name_to_col: dict[str, int] = {}

    # -- construction ---------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name, lb, ub, binary=False, key=None) -> int:
        if name in self._name_to_col:
            raise ConfigurationError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise ConfigurationError(f"variable {name!r} needs finite bounds")
        if lb > ub + 1e-12:
            raise ConfigurationError(f"variable {name!r} has empty bound range")
        j = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.is_binary.append(bool(binary))
        self._name_to_col[name] = j
        if key is not None:
            self.registry[key] = j
        return j

    def add_row(self, name, coeffs: dict, sense: str, rhs: float):
        if sense not in SENSES:
            raise ConfigurationError(f"unknown sense {sense!r}")
        items = [(j, float(v)) for j, v in coeffs.items() if v != 0.0]
        for j, _ in items:
            if not (0 <= j < self.n_vars):
                raise ConfigurationError(f"row {name!r} references undeclared column {j}")
        items.sort()
        idx = np.array([j for j, _ in items], dtype=int)
        val = np.array([v for _, v in items], dtype=float)
        self.rows.append(Row(name=name, idx=idx, val=val, sense=sense, rhs=float(rhs)))

    def set_objective(self, coeffs: dict, offset=0.0):
        self.obj = {int(j): float(v) for j, v in coeffs.items() if v != 0.0}
        self.obj_offset = float(offset)

    def add_objective_term(self, j, v):
        self.obj[j] = self.obj.get(j, 0.0) + float(v)

    def column(self, name) -> int:
        return self._name_to_col[name]

    def binary_count(self) -> int:
        return int(sum(self.is_binary))

    def fix_var(self, j, value):
        self.lb[j] = float(value)
        self.ub[j] = float(value)

    # -- dense views for the solver --------------------------------------------

    def dense(self):
        a = np.zeros((self.n_rows, self.n_vars))
        rhs = np.zeros(self.n_rows)
        senses = []
        for i, row in enumerate(self.rows):
            a[i, row.idx] = row.val
            rhs[i] = row.rhs
            senses.append(row.sense)
        c = np.zeros(self.n_vars)
        for j, v in self.obj.items():
            c[j] = v
        return a, np.array(senses), rhs, c, np.array(self.lb), np.array(self.ub)

    # -- LP text format ---------------------------------------------------------

    def to_lp(self) -> str:
        if len(set(self.var_names)) != len(self.var_names):
            raise ConfigurationError("variable name collision")
        out = [f"\\Problem name: {self.name}", "Minimize"]
        terms = [(j, self.obj[j]) for j in sorted(self.obj)]
        out.append((" obj: " + _expr(terms, self.var_names)) if terms else " obj:")
        out.append("Subject To")
        for row in self.rows:
            expr = _expr(list(zip(row.idx.tolist(), row.val.tolist())), self.var_names)
            out.append(f" {row.name}: {expr} {_SENSE_TO_TEXT[row.sense]} {_fmt(row.rhs)}")
        out.append("Bounds")
        for j, name in enumerate(self.var_names):
            out.append(f" {_fmt(self.lb[j])} <= {name} <= {_fmt(self.ub[j])}")
        if any(self.is_binary):
            out.append("Binaries")
            for j, name in enumerate(self.var_names):
                if self.is_binary[j]:
                    out.append(f" {name}")
        out.append("End")
        return "\n".join(out) + "\n"


def _expr(terms, names) -> str:
    parts = []
    for k, (j, v) in enumerate(terms):
        if k == 0:
            sign = "-" if v < 0 else ""
        else:
            sign = "- " if v < 0 else "+ "
        parts.append(f"{sign}{_fmt(abs(v))} {names[j]}")
    return " ".join(parts) if parts else "0"


_NAME_RE = r"[A-Za-z_][A-Za-z0-9_()\[\].]*"
_NUM_RE = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN_RE = re.compile(rf"({_NUM_RE})|({_NAME_RE})|(<=|>=|=<|=>|[<>=+\-:])")


def parse_lp(text: str) -> MilpModel:
    """Parse the subset of the LP format written by to_lp (plus free layout)."""
    lines = []
    for raw in text.splitlines():
        line = raw.split("\\")[0].rstrip()
        if line.strip():
            lines.append(line)

    section = None
    model = MilpModel()
    obj_terms: list[tuple[str, float]] = []
    row_acc: list = []           # [name, terms, sense, rhs] while building
    rows_raw = []
    bounds_raw = []
    binaries = []

    def flush_row():
        if row_acc:
            rows_raw.append(tuple(row_acc))
            row_acc.clear()

    for line in lines:
        stripped = line.strip()
        low = stripped.lower()
        if low in ("minimize", "minimise", "min"):
            section = "obj"; continue
        if low in ("subject to", "st", "s.t.", "such that"):
            flush_row(); section = "rows"; continue
        if low == "bounds":
            flush_row(); section = "bounds"; continue
        if low in ("binaries", "binary", "bin"):
            flush_row(); section = "bin"; continue
        if low == "end":
            flush_row(); section = "end"; continue
        if section == "obj":
            body = stripped.split(":", 1)[1] if ":" in stripped else stripped
            obj_terms.extend(_parse_terms(body))
        elif section == "rows":
            if ":" in stripped:
                flush_row()
                name, body = stripped.split(":", 1)
                row_acc.extend([name.strip(), [], None, None])
            else:
                body = stripped
                if not row_acc:
                    raise RejectedInputError("constraint continuation before any row")
            terms, sense, rhs = _parse_row_body(body)
            row_acc[1].extend(terms)
            if sense is not None:
                row_acc[2], row_acc[3] = sense, rhs
        elif section == "bounds":
            bounds_raw.append(stripped)
        elif section == "bin":
            binaries.extend(stripped.split())

    names = []
    seen = set()
    for _, n in obj_terms:
        if n not in seen:
            seen.add(n); names.append(n)
    for r in rows_raw:
        for _, n in r[1]:
            if n not in seen:
                seen.add(n); names.append(n)
    lob, upb = {}, {}
    for b in bounds_raw:
        m = re.match(rf"^\s*(-?{_NUM_RE})\s*<=\s*({_NAME_RE})\s*<=\s*(-?{_NUM_RE})\s*$", b)
        if m:
            lob[m.group(2)] = float(m.group(1))
            upb[m.group(2)] = float(m.group(3))
            if m.group(2) not in seen:
                seen.add(m.group(2)); names.append(m.group(2))
            continue
        m = re.match(rf"^\s*({_NAME_RE})\s*=\s*(-?{_NUM_RE})\s*$", b)
        if m:
            lob[m.group(1)] = upb[m.group(1)] = float(m.group(2))
            if m.group(1) not in seen:
                seen.add(m.group(1)); names.append(m.group(1))
            continue
        raise RejectedInputError(f"unsupported bound line: {b!r}")

    binset = set(binaries)
    for n in names:
        lo = lob.get(n, 0.0)
        hi = upb.get(n, 1.0 if n in binset else math.inf)
        model.add_var(n, lo, hi, binary=n in binset)
    for name, terms, sense, rhs in rows_raw:
        if sense is None:
            raise RejectedInputError(f"row {name!r} has no relation")
        coeffs = {}
        for v, n in terms:
            j = model.column(n)
            coeffs[j] = coeffs.get(j, 0.0) + v
        model.add_row(name, coeffs, sense, rhs)
    obj = {}
    for v, n in obj_terms:
        j = model.column(n)
        obj[j] = obj.get(j, 0.0) + v
    model.set_objective(obj)
    return model


def _parse_terms(body):
    """Parse '+ 2 x - y + 3.5e-2 z' into [(coef, name), ...]."""
    terms = []
    sign = 1.0
    coef = None
    for m in _TOKEN_RE.finditer(body):
        num, name, op = m.groups()
        if op == "+":
            pass
        elif op == "-":
            sign = -sign
        elif num is not None:
            coef = (coef if coef is not None else 1.0) * float(num)
        elif name is not None:
            terms.append((sign * (coef if coef is not None else 1.0), name))
            sign, coef = 1.0, None
        else:
            raise RejectedInputError(f"unexpected token {op!r} in expression")
    return terms


def _parse_row_body(body):
    for text, sense in sorted(_TEXT_TO_SENSE.items(), key=lambda kv: -len(kv[0])):
        pos = body.find(text)
        if pos >= 0:
            lhs, rhs_text = body[:pos], body[pos + len(text):]
            rhs_terms = _parse_terms(rhs_text)
            if len(rhs_terms) != 1 or not re.match(rf"^\s*[+-]?\s*{_NUM_RE}\s*$", rhs_text):
                raise RejectedInputError(f"expected numeric rhs in {body!r}")
            rhs = float(rhs_text.replace(" ", ""))
            return _parse_terms(lhs), sense, rhs
    return _parse_terms(body), None, None
