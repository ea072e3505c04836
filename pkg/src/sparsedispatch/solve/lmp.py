"""Locational marginal prices and MIP-gap sweeps."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigurationError, ConsistencyError
from ..milp.model import MilpModel
from .adapter import OPTIMAL, SolverOptions, run

DUAL_TOL = 1e-7


@dataclass(frozen=True)
class LmpReport:
    buses: tuple
    prices: np.ndarray  # (B, T) $/MWh
    lines: tuple
    congested: np.ndarray  # (K, T) bool, a line-limit dual is nonzero
    objective: float

    def price(self, bus, t):
        """Price at ``bus`` in interval ``t`` (1-based)."""
        return float(self.prices[self.buses.index(str(bus)), t - 1])

    def congested_hours(self):
        return [t + 1 for t in range(self.prices.shape[1]) if self.congested[:, t].any()]

    def uncongested_hours(self):
        return [t + 1 for t in range(self.prices.shape[1]) if not self.congested[:, t].any()]

    def spread(self, t):
        col = self.prices[:, t - 1]
        return float(col.max() - col.min())

    def rows(self):
        """(t, bus, price, congested_anywhere) rows in time-major order."""
        out = []
        for t in range(self.prices.shape[1]):
            flag = bool(self.congested[:, t].any()) if len(self.lines) else False
            for i, b in enumerate(self.buses):
                out.append((t + 1, b, float(self.prices[i, t]), flag))
        return out


def fixed_binary_lp(model: MilpModel, values) -> MilpModel:
    """Copy of ``model`` with every binary fixed to its (rounded) solved value."""
    return model.relax_integrality(fixed={v.name: values[v.name] for v in model.binaries()})


def compute_lmp(case, sol, net=None, opts: SolverOptions = SolverOptions(), build=None) -> LmpReport:
    """LMPs for a solved schedule of ``case``.

    The model is rebuilt with the same network and build options that
    produced ``sol``; see ``lmp_from_model``.
    """
    from ..sched.builder import BuildOptions, build_model

    model = build_model(case, net, build or BuildOptions())
    return lmp_from_model(model, sol.values, opts)


def lmp_from_model(model: MilpModel, values, opts: SolverOptions = SolverOptions()) -> LmpReport:
    """Fix all binaries at ``values``, re-solve the LP and read balance-row duals.

    ``model`` must be the MILP that produced ``values``; its balance rows are
    found through their ``power_balance@bus,t`` role annotations.
    """
    lp = fixed_binary_lp(model, values)
    res = run(lp, opts)
    if res.status != OPTIMAL or res.duals is None:
        raise ConsistencyError(f"fixed-binary LP is {res.status}; the MILP solution cannot be reproduced")
    balance = {}
    for name in model.by_role("power_balance@"):
        bus, t = model.annotations[name].split("@", 1)[1].rsplit(",", 1)
        balance[(bus, int(t))] = res.duals[name]
    buses = tuple(dict.fromkeys(b for b, _ in balance))
    T = max(t for _, t in balance)
    prices = np.array([[balance[(b, t)] for t in range(1, T + 1)] for b in buses], dtype=float)
    limits = {}
    for name in model.by_role("line_limit@"):
        line, t = model.annotations[name].split("@", 1)[1].rsplit(",", 1)
        limits.setdefault(line, np.zeros(T, dtype=bool))
        if abs(res.duals[name]) > DUAL_TOL:
            limits[line][int(t) - 1] = True
    lines = tuple(limits)
    congested = np.array([limits[k] for k in lines], dtype=bool).reshape(len(lines), T)
    return LmpReport(buses, prices, lines, congested, res.objective)


@dataclass(frozen=True)
class GapRow:
    mip_gap: float
    status: str
    objective: float
    best_bound: float
    achieved_gap: float
    wall_time: float


def gap_sweep(model: MilpModel, gaps, opts: SolverOptions = SolverOptions()):
    """Solve ``model`` once per requested relative gap, everything else equal."""
    gaps = [float(g) for g in gaps]
    if len(gaps) < 2:
        raise ConfigurationError("a gap sweep needs at least two gaps")
    rows = []
    for g in gaps:
        res = run(model, dataclasses.replace(opts, mip_gap=g))
        rows.append(GapRow(g, res.status, res.objective, res.best_bound, res.gap, res.wall_time))
    return rows


def objective_spread(rows: list, key: Optional[str] = "objective"):
    """Relative spread (max - min) / min over the rows' objectives."""
    vals = np.array([getattr(r, key) for r in rows], dtype=float)
    return float((vals.max() - vals.min()) / abs(vals.min()))
