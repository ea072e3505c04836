"""CPLEX-LP and MPS emission for MilpModel, with round-trip parsers.

Output is canonical: variables and rows are sorted by name, every number
is written with ``repr`` so parsing gives back the exact float.  The MPS
writer aligns fields in fixed-width columns sized to the longest name
(names may exceed the classic 8 characters, so readers must accept the
free-format convention of whitespace-separated fields).
"""
from __future__ import annotations

import math
import re

from ..errors import EmissionError
from .model import BINARY, CONTINUOUS, LinExpr, MilpModel

_NAME_OK = re.compile(r"[^A-Za-z0-9_]")
MAX_NAME = 255
_TERMS_PER_LINE = 6


def sanitize(name):
    return _NAME_OK.sub("_", name)[:MAX_NAME]


def _name_map(names, what):
    out = {}
    seen = {}
    for n in names:
        s = sanitize(n)
        if s in seen and seen[s] != n:
            raise EmissionError(f"{what} names {seen[s]!r} and {n!r} collide as {s!r}")
        seen[s] = n
        out[n] = s
    return out


def _num(x):
    x = float(x)
    if x == 0.0:
        return "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _prepare(model: MilpModel):
    vmap = _name_map(model.variables, "variable")
    cmap = _name_map(model.constraints, "constraint")
    for c in model.constraints.values():
        if not c.terms:
            raise EmissionError(f"constraint {c.name!r} has no terms")
    variables = sorted(model.variables.values(), key=lambda v: vmap[v.name])
    constraints = sorted(model.constraints.values(), key=lambda c: cmap[c.name])
    return vmap, cmap, variables, constraints


# ------------------------------------------------------------------ LP


def _lp_terms(terms, vmap):
    items = sorted(((vmap[n], c) for n, c in terms.items() if c != 0.0))
    parts = []
    for n, c in items:
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {_num(abs(c))} {n}")
    lines = [" ".join(parts[i : i + _TERMS_PER_LINE]) for i in range(0, len(parts), _TERMS_PER_LINE)]
    return lines or ["0"]


def emit_lp(model: MilpModel) -> str:
    vmap, cmap, variables, constraints = _prepare(model)
    out = [f"\\ Problem: {sanitize(model.name)}", "Minimize"]
    obj_lines = _lp_terms(model.objective.terms, vmap)
    if model.objective.const != 0.0:
        c = model.objective.const
        const = f"{'-' if c < 0 else '+'} {_num(abs(c))}"
        obj_lines = [const] if obj_lines == ["0"] else obj_lines + [const]
    out.append(f" obj: {obj_lines[0]}")
    out.extend(f"      {line}" for line in obj_lines[1:])
    out.append("Subject To")
    for c in constraints:
        lines = _lp_terms(c.terms, vmap)
        sense = {"<=": "<=", ">=": ">=", "=": "="}[c.sense]
        lines[-1] += f" {sense} {_num(c.rhs)}"
        out.append(f" {cmap[c.name]}: {lines[0]}")
        out.extend(f"   {line}" for line in lines[1:])
    out.append("Bounds")
    for v in variables:
        n = vmap[v.name]
        if v.lb == -math.inf and v.ub == math.inf:
            out.append(f" {n} free")
        elif v.lb == v.ub:
            out.append(f" {n} = {_num(v.lb)}")
        else:
            lo = "-inf" if v.lb == -math.inf else _num(v.lb)
            hi = "+inf" if v.ub == math.inf else _num(v.ub)
            out.append(f" {lo} <= {n} <= {hi}")
    bins = [vmap[v.name] for v in variables if v.kind == BINARY]
    if bins:
        out.append("Binaries")
        out.extend(f" {n}" for n in bins)
    out.append("End")
    return "\n".join(out) + "\n"


_SECTIONS = {"minimize", "subject to", "bounds", "binaries", "end"}


def _parse_float(tok):
    t = tok.lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def _parse_lp_expr(tokens):
    """Tokens like ['+', '2', 'x', '-', '3', 'y', '+', '5'] -> LinExpr."""
    expr = LinExpr()
    i = 0
    sign = 1.0
    while i < len(tokens):
        tok = tokens[i]
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
            i += 1
            continue
        try:
            coef = float(tok)
        except ValueError:
            expr.add_term(tok, sign)
            sign = 1.0
            i += 1
            continue
        if i + 1 < len(tokens) and tokens[i + 1] not in "+-":
            expr.add_term(tokens[i + 1], sign * coef)
            i += 2
        else:
            expr.const += sign * coef
            i += 1
        sign = 1.0
    return expr


def parse_lp(text: str) -> MilpModel:
    """Parse the subset of CPLEX-LP written by :func:`emit_lp`."""
    model = MilpModel()
    section = None
    chunks = {"minimize": [], "subject to": [], "bounds": [], "binaries": []}
    for raw in text.splitlines():
        if raw.startswith("\\"):
            m = re.match(r"\\ Problem: (\S+)", raw)
            if m:
                model.name = m.group(1)
            continue
        line = raw.strip()
        if not line:
            continue
        if line.lower() in _SECTIONS:
            section = line.lower()
            continue
        if section is None:
            raise EmissionError(f"content before first section: {raw!r}")
        if raw.startswith(" ") and not raw.startswith("   ") or section in ("bounds", "binaries"):
            chunks[section].append(line)
        else:
            chunks[section][-1] += " " + line

    rows = []
    for entry in chunks["subject to"]:
        name, _, body = entry.partition(":")
        toks = body.split()
        sense = next(t for t in toks if t in ("<=", ">=", "="))
        k = toks.index(sense)
        rows.append((name.strip(), _parse_lp_expr(toks[:k]), sense, float(toks[k + 1])))
    obj = LinExpr()
    for entry in chunks["minimize"]:
        toks = entry.partition(":")[2].split()
        obj.iadd(_parse_lp_expr([] if toks == ["0"] else toks))

    bins = set(chunks["binaries"])
    for entry in chunks["bounds"]:
        toks = entry.split()
        if len(toks) == 2 and toks[1] == "free":
            name, lb, ub = toks[0], -math.inf, math.inf
        elif len(toks) == 3 and toks[1] == "=":
            name, lb, ub = toks[0], float(toks[2]), float(toks[2])
        elif len(toks) == 5:
            name, lb, ub = toks[2], _parse_float(toks[0]), _parse_float(toks[4])
        else:
            raise EmissionError(f"cannot parse bound {entry!r}")
        kind = BINARY if name in bins else CONTINUOUS
        v = model.add_var(name, lb, ub, kind)
        v.lb, v.ub = lb, ub
    for name, expr, sense, rhs in rows:
        model.add_constr(expr, sense, rhs, name=name)
    model.add_objective(obj)
    return model


# ------------------------------------------------------------------ MPS

_OBJ = "obj"


def emit_mps(model: MilpModel) -> str:
    vmap, cmap, variables, constraints = _prepare(model)
    if _OBJ in cmap.values():
        raise EmissionError(f"constraint name {_OBJ!r} is reserved for the objective row")
    w = max([len(_OBJ), 8] + [len(n) for n in vmap.values()] + [len(n) for n in cmap.values()])

    def field(s):
        return s.ljust(w)

    out = [f"NAME          {sanitize(model.name)}", "ROWS", f" N  {_OBJ}"]
    code = {"<=": "L", ">=": "G", "=": "E"}
    for c in constraints:
        out.append(f" {code[c.sense]}  {cmap[c.name]}")

    by_col = {v.name: [] for v in variables}
    for c in constraints:
        for n, coef in c.terms.items():
            by_col[n].append((cmap[c.name], coef))
    out.append("COLUMNS")
    in_int = False
    marker = 0

    def mark(tag):
        out.append(f"    {field(f'MARKER{marker:04d}')}  {field(chr(39) + 'MARKER' + chr(39))}  '{tag}'")

    for v in variables:
        is_int = v.kind == BINARY
        if is_int and not in_int:
            mark("INTORG")
        elif in_int and not is_int:
            mark("INTEND")
            marker += 1
        in_int = is_int
        entries = []
        oc = model.objective.terms.get(v.name, 0.0)
        if oc != 0.0 or not by_col[v.name]:
            entries.append((_OBJ, oc))
        entries.extend(sorted(by_col[v.name]))
        for row, coef in entries:
            out.append(f"    {field(vmap[v.name])}  {field(row)}  {_num(coef)}")
    if in_int:
        mark("INTEND")

    out.append("RHS")
    if model.objective.const != 0.0:
        out.append(f"    {field('RHS')}  {field(_OBJ)}  {_num(-model.objective.const)}")
    for c in constraints:
        if c.rhs != 0.0:
            out.append(f"    {field('RHS')}  {field(cmap[c.name])}  {_num(c.rhs)}")

    out.append("BOUNDS")
    for v in variables:
        n = field(vmap[v.name])
        if v.kind == BINARY and v.lb == 0.0 and v.ub == 1.0:
            out.append(f" BV {field('BND')}  {n}")
            continue
        if v.lb == v.ub:
            out.append(f" FX {field('BND')}  {n}  {_num(v.lb)}")
            continue
        if v.lb == -math.inf and v.ub == math.inf:
            out.append(f" FR {field('BND')}  {n}")
            continue
        if v.lb == -math.inf:
            out.append(f" MI {field('BND')}  {n}")
        elif v.lb != 0.0 or v.ub < 0.0 or v.kind == BINARY:
            out.append(f" LO {field('BND')}  {n}  {_num(v.lb)}")
        if v.ub != math.inf:
            out.append(f" UP {field('BND')}  {n}  {_num(v.ub)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def parse_mps(text: str) -> MilpModel:
    """Parse MPS as written by :func:`emit_mps` (free-format field splitting)."""
    model = MilpModel()
    section = None
    obj_row = None
    rows = {}  # name -> [sense, terms, rhs]
    cols = {}  # name -> [kind, lb, ub]
    obj = LinExpr()
    in_int = False
    sense_of = {"L": "<=", "G": ">=", "E": "="}
    order = []
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0]
            if section == "NAME" and len(head) > 1:
                model.name = head[1]
            continue
        f = raw.split()
        if section == "ROWS":
            if f[0] == "N":
                obj_row = f[1]
            else:
                rows[f[1]] = [sense_of[f[0]], {}, 0.0]
        elif section == "COLUMNS":
            if len(f) >= 3 and f[1] == "'MARKER'":
                in_int = f[2] == "'INTORG'"
                continue
            name = f[0]
            if name not in cols:
                cols[name] = [BINARY if in_int else CONTINUOUS, 0.0, math.inf]
                order.append(name)
            for row, val in zip(f[1::2], f[2::2]):
                v = float(val)
                if row == obj_row:
                    if v != 0.0:
                        obj.add_term(name, v)
                elif v != 0.0:
                    rows[row][1][name] = v
        elif section == "RHS":
            for row, val in zip(f[1::2], f[2::2]):
                if row == obj_row:
                    obj.const = -float(val)
                else:
                    rows[row][2] = float(val)
        elif section == "BOUNDS":
            kind, name = f[0], f[2]
            col = cols[name]
            val = float(f[3]) if len(f) > 3 else None
            if kind == "UP":
                col[2] = val
            elif kind == "LO":
                col[1] = val
            elif kind == "FX":
                col[1] = col[2] = val
            elif kind == "FR":
                col[1], col[2] = -math.inf, math.inf
            elif kind == "MI":
                col[1] = -math.inf
            elif kind == "BV":
                col[0], col[1], col[2] = BINARY, 0.0, 1.0
            else:
                raise EmissionError(f"unsupported bound type {kind!r}")
    for name in order:
        kind, lb, ub = cols[name]
        v = model.add_var(name, lb, ub, kind)
        v.lb, v.ub = lb, ub
    for name, (sense, terms, rhs) in rows.items():
        model.add_constr(LinExpr(terms), sense, rhs, name=name)
    model.add_objective(obj)
    return model
