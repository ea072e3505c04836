"""Solver-agnostic MILP intermediate representation.

Linear expressions are dicts from variable name to coefficient plus a
constant.  Models are minimisations; constraints carry an optional role
annotation (``"power_balance@14,7"``) that downstream code uses to find
them again without parsing names.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from numbers import Real

CONTINUOUS = "C"
BINARY = "B"
SENSES = ("<=", "=", ">=")


class LinExpr:
    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def of(x):
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, Var):
            return LinExpr({x.name: 1.0})
        if isinstance(x, Real):
            return LinExpr(const=x)
        raise TypeError(f"cannot build a linear expression from {type(x).__name__}")

    def copy(self):
        return LinExpr(self.terms, self.const)

    def add_term(self, name, coef):
        self.terms[name] = self.terms.get(name, 0.0) + float(coef)
        return self

    def iadd(self, other, scale=1.0):
        other = LinExpr.of(other)
        for k, v in other.terms.items():
            self.terms[k] = self.terms.get(k, 0.0) + scale * v
        self.const += scale * other.const
        return self

    def __add__(self, other):
        return self.copy().iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().iadd(other, -1.0)

    def __rsub__(self, other):
        return LinExpr.of(other).copy().iadd(self, -1.0)

    def __mul__(self, k):
        if not isinstance(k, Real):
            return NotImplemented
        return LinExpr({n: k * v for n, v in self.terms.items()}, k * self.const)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def value(self, values):
        return self.const + sum(c * values[n] for n, c in self.terms.items())

    def __repr__(self):
        body = " ".join(f"{c:+g}*{n}" for n, c in self.terms.items())
        return f"LinExpr({body} {self.const:+g})"


@dataclass(eq=False)
class Var:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = math.inf

    def _expr(self):
        return LinExpr({self.name: 1.0})

    def __add__(self, other):
        return self._expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._expr() - other

    def __rsub__(self, other):
        return LinExpr.of(other) - self._expr()

    def __mul__(self, k):
        if not isinstance(k, Real):
            return NotImplemented
        return LinExpr({self.name: float(k)})

    __rmul__ = __mul__

    def __neg__(self):
        return LinExpr({self.name: -1.0})

    @property
    def is_binary(self):
        return self.kind == BINARY


@dataclass
class Constraint:
    name: str
    terms: dict
    sense: str
    rhs: float

    def activity(self, values):
        return sum(c * values[n] for n, c in self.terms.items())

    def violation(self, values):
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class MilpModel:
    name: str = "model"
    variables: dict = field(default_factory=dict)
    constraints: dict = field(default_factory=dict)
    objective: LinExpr = field(default_factory=LinExpr)
    annotations: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)  # free-form build metadata, not emitted

    # ---------------------------------------------------------- building

    def add_var(self, name, lb=0.0, ub=math.inf, kind=CONTINUOUS):
        if name in self.variables:
            raise ValueError(f"duplicate variable {name!r}")
        lb, ub = float(lb), float(ub)
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        elif kind != CONTINUOUS:
            raise ValueError(f"unknown variable kind {kind!r}")
        v = Var(name, kind, lb, ub)
        self.variables[name] = v
        return v

    def add_binary(self, name):
        return self.add_var(name, 0.0, 1.0, BINARY)

    def add_constr(self, lhs, sense, rhs=0.0, name=None, role=None):
        """Add ``lhs sense rhs``; constants on either side are folded into the rhs."""
        if sense == "==":
            sense = "="
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        expr = LinExpr.of(lhs) - LinExpr.of(rhs)
        if name is None:
            k = len(self.constraints)
            while f"c{k}" in self.constraints:
                k += 1
            name = f"c{k}"
        if name in self.constraints:
            raise ValueError(f"duplicate constraint {name!r}")
        terms = {}
        for n, c in expr.terms.items():
            if n not in self.variables:
                raise KeyError(f"constraint {name!r} references undeclared variable {n!r}")
            if c != 0.0:
                terms[n] = c
        con = Constraint(name, terms, sense, -expr.const)
        self.constraints[name] = con
        if role is not None:
            self.annotations[name] = role
        return con

    def add_objective(self, expr):
        expr = LinExpr.of(expr)
        for n in expr.terms:
            if n not in self.variables:
                raise KeyError(f"objective references undeclared variable {n!r}")
        self.objective.iadd(expr)

    # ---------------------------------------------------------- queries

    def var(self, name):
        return self.variables[name]

    def binaries(self):
        return [v for v in self.variables.values() if v.is_binary]

    @property
    def has_binaries(self):
        return any(v.is_binary for v in self.variables.values())

    def by_role(self, prefix):
        """Constraint names whose role annotation starts with ``prefix``."""
        return [n for n, r in self.annotations.items() if r.startswith(prefix)]

    def objective_value(self, values):
        return self.objective.value(values)

    def violations(self, values, tol=1e-6, int_tol=1e-6):
        """(kind, name, amount) for every bound, integrality or row violation above ``tol``."""
        out = []
        for v in self.variables.values():
            x = values[v.name]
            if x < v.lb - tol or x > v.ub + tol:
                out.append(("bound", v.name, max(v.lb - x, x - v.ub)))
            if v.is_binary and abs(x - round(x)) > int_tol:
                out.append(("integrality", v.name, abs(x - round(x))))
        for c in self.constraints.values():
            r = c.violation(values)
            # rows are checked on a relative scale when the rhs is large
            if r > tol * max(1.0, abs(c.rhs)):
                out.append(("row", c.name, r))
        return out

    # ---------------------------------------------------------- editing

    def copy(self):
        return copy.deepcopy(self)

    def fix(self, name, value):
        v = self.variables[name]
        v.lb = v.ub = float(value)

    def relax_integrality(self, fixed=None):
        """Copy with binaries turned continuous; ``fixed`` maps binary names to values."""
        m = self.copy()
        for v in m.variables.values():
            if v.is_binary:
                v.kind = CONTINUOUS
                if fixed is not None:
                    val = float(round(fixed[v.name]))
                    v.lb = v.ub = val
        return m

    def canonical(self):
        """Hashable, order-independent description used to compare models."""
        variables = tuple(sorted((v.name, v.kind, v.lb, v.ub) for v in self.variables.values()))
        constraints = tuple(
            sorted((c.name, tuple(sorted(c.terms.items())), c.sense, c.rhs) for c in self.constraints.values())
        )
        obj = (tuple(sorted((n, c) for n, c in self.objective.terms.items() if c != 0.0)), self.objective.const)
        return variables, constraints, obj

    def stats(self):
        return {
            "variables": len(self.variables),
            "binaries": len(self.binaries()),
            "constraints": len(self.constraints),
        }
