"""Solved schedules: extraction, post-hoc feasibility checks, degradation replay, CSV export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ExtractionError
from ..milp.model import MilpModel
from ..network import SparseNet, predict_raw
from .case import MICROGRID, NETWORK, Case

DISPATCH_HEADER = ("t", "device", "kind", "bus", "on", "startup", "power_mw")
BESS_HEADER = ("bess", "t", "soc", "charge", "discharge", "dod", "crate", "bd")
COSTS_HEADER = ("operation", "bd_cost", "pseudo_total", "og_bd_cost", "updated_total", "objective")
FLOWS_HEADER = ("t", "line", "from_bus", "to_bus", "flow_mw", "limit_mw")


@dataclass
class ScheduleSolution:
    case_name: str
    kind: str
    status: str
    objective: float
    gap: float
    wall_time: float
    values: dict  # every model variable, binaries rounded, clipped to bounds
    gen_names: tuple
    U: np.ndarray  # (G, T)
    V: np.ndarray
    P: np.ndarray
    bess_names: tuple
    u_char: np.ndarray  # (S, T)
    u_disc: np.ndarray
    p_char: np.ndarray
    p_disc: np.ndarray
    energy: np.ndarray  # (S, T) at the end of each interval
    soc: np.ndarray  # (S, T + 1) including the initial state
    ddod: np.ndarray  # (S, T)
    crate: np.ndarray  # (S, T)
    operation_cost: float
    bd: np.ndarray  # (S,) SOH loss per BESS predicted inside the model
    bd_interval: np.ndarray  # (S, T)
    bd_cost: np.ndarray  # (S,)
    line_names: tuple = ()
    flow: Optional[np.ndarray] = None  # (K, T)
    bus_names: tuple = ()
    theta: Optional[np.ndarray] = None  # (B, T)
    u_buy: Optional[np.ndarray] = None  # (T,)
    u_sell: Optional[np.ndarray] = None
    p_buy: Optional[np.ndarray] = None
    p_sell: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def degradation_cost(self):
        return float(np.sum(self.bd_cost))

    @property
    def pseudo_total(self):
        return self.operation_cost + self.degradation_cost

    def discharged_energy(self, dt=1.0):
        return float(np.sum(self.p_disc) * dt)


def operation_cost(case: Case, values) -> float:
    """Generator fuel, no-load and start-up cost plus net tie-line purchases."""
    dt = case.profiles.dt
    total = 0.0
    for g in case.generators:
        for t in range(1, case.horizon + 1):
            total += (dt * g.cost * values[f"p_{g.name}_{t}"] + dt * g.no_load_cost * values[f"u_{g.name}_{t}"]
                      + g.startup_cost * values[f"v_{g.name}_{t}"])
    if case.kind == MICROGRID:
        p = case.profiles
        for t in range(1, case.horizon + 1):
            total += dt * (p.buy_price[t - 1] * values[f"pb_{t}"] - p.sell_price[t - 1] * values[f"ps_{t}"])
    return total


def _grid(values, fmt, names, T):
    return np.array([[values[fmt.format(n, t)] for t in range(1, T + 1)] for n in names], dtype=float).reshape(
        len(names), T)


def extract_solution(model: MilpModel, result, case: Case) -> ScheduleSolution:
    """Map solver values back onto the case and recompute derived quantities."""
    if not result.has_solution:
        raise ExtractionError(f"solve result has status {result.status!r}, no solution to extract")
    values = {}
    for name, v in model.variables.items():
        if name not in result.values:
            raise ExtractionError(f"variable {name!r} missing from the solution")
        x = float(result.values[name])
        # project onto the declared bounds; solvers honour them only up to tolerance
        x = min(max(x, v.lb), v.ub)
        values[name] = float(round(x)) if v.is_binary else x
    T, dt = case.horizon, case.profiles.dt
    gens = tuple(g.name for g in case.generators)
    bess = tuple(s.name for s in case.bess)
    S = len(bess)
    energy = _grid(values, "e_{}_{}", bess, T)
    e0 = np.array([s.e_initial for s in case.bess]).reshape(S, 1)
    emax = np.array([s.e_max for s in case.bess]).reshape(S, 1)
    eta_c = np.array([s.eta_charge for s in case.bess]).reshape(S, 1)
    eta_d = np.array([s.eta_discharge for s in case.bess]).reshape(S, 1)
    p_char, p_disc = _grid(values, "pc_{}_{}", bess, T), _grid(values, "pd_{}_{}", bess, T)
    soc = np.concatenate([e0, energy], axis=1) / emax
    ddod = dt * (p_char * eta_c + p_disc / eta_d) / emax
    bd_interval = np.zeros((S, T))
    bd_cost = np.zeros(S)
    degr = model.meta.get("degradation", {})
    scale = model.meta.get("target_scale", 0.0)
    for i, s in enumerate(case.bess):
        outs = degr.get(s.name)
        if outs:
            bd_interval[i] = [scale * values[n] for n in outs]
            bd_cost[i] = s.degradation_price * bd_interval[i].sum()
    sol = ScheduleSolution(
        case_name=case.name, kind=case.kind, status=result.status, objective=float(result.objective),
        gap=float(result.gap), wall_time=float(result.wall_time), values=values, gen_names=gens,
        U=_grid(values, "u_{}_{}", gens, T), V=_grid(values, "v_{}_{}", gens, T), P=_grid(values, "p_{}_{}", gens, T),
        bess_names=bess, u_char=_grid(values, "uc_{}_{}", bess, T), u_disc=_grid(values, "ud_{}_{}", bess, T),
        p_char=p_char, p_disc=p_disc, energy=energy, soc=soc, ddod=ddod, crate=ddod / dt,
        operation_cost=operation_cost(case, values), bd=bd_interval.sum(axis=1), bd_interval=bd_interval,
        bd_cost=bd_cost)
    if case.kind == NETWORK:
        sol.line_names = tuple(k.name for k in case.lines)
        sol.flow = _grid(values, "f_{}_{}", sol.line_names, T)
        sol.bus_names = tuple(case.buses)
        sol.theta = _grid(values, "th_{}_{}", sol.bus_names, T)
    else:
        hours = range(1, T + 1)
        sol.u_buy = np.array([values[f"ub_{t}"] for t in hours])
        sol.u_sell = np.array([values[f"us_{t}"] for t in hours])
        sol.p_buy = np.array([values[f"pb_{t}"] for t in hours])
        sol.p_sell = np.array([values[f"ps_{t}"] for t in hours])
    return sol


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    check: str
    where: str
    residual: float


@dataclass
class ViolationReport:
    violations: list

    @property
    def ok(self):
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def checks(self):
        return sorted({v.check for v in self.violations})

    def __str__(self):
        if self.ok:
            return "no violations"
        lines = [f"{len(self.violations)} violations"]
        lines += [f"  {v.check} at {v.where}: residual {v.residual:.3g}" for v in self.violations[:50]]
        return "\n".join(lines)


def validate_solution(case: Case, sol: ScheduleSolution, tol=1e-6) -> ViolationReport:
    """Re-check every scheduling constraint on the extracted arrays.

    Equalities report |lhs - rhs|; inequalities report the amount by which
    they fail.  Anything above ``tol`` is a violation.
    """
    out = []
    T, dt = case.horizon, case.profiles.dt

    def flag(check, where, residual):
        if residual > tol:
            out.append(Violation(check, where, float(residual)))

    def binary(check, name, arr):
        for t, x in enumerate(np.atleast_1d(arr), 1):
            flag(check, f"{name},{t}", min(abs(x), abs(x - 1.0)))

    for i, g in enumerate(case.generators):
        U, V, P = sol.U[i], sol.V[i], sol.P[i]
        binary("integrality", f"u_{g.name}", U)
        binary("integrality", f"v_{g.name}", V)
        for t in range(T):
            w = f"{g.name},{t + 1}"
            flag("gen_min", w, U[t] * g.p_min - P[t])
            flag("gen_max", w, P[t] - U[t] * g.p_max)
            u_prev = (1.0 if g.initial_on else 0.0) if t == 0 else U[t - 1]
            flag("startup", w, (U[t] - u_prev) - V[t])
            flag("startup", w, V[t] - (1.0 - u_prev))
            flag("startup", w, V[t] - U[t])
            if t > 0:
                flag("ramp", w, abs(P[t] - P[t - 1]) - g.ramp * dt)

    for i, s in enumerate(case.bess):
        uc, ud, pc, pd, e = sol.u_char[i], sol.u_disc[i], sol.p_char[i], sol.p_disc[i], sol.energy[i]
        binary("integrality", f"uc_{s.name}", uc)
        binary("integrality", f"ud_{s.name}", ud)
        for t in range(T):
            w = f"{s.name},{t + 1}"
            flag("bess_exclusive", w, uc[t] + ud[t] - 1.0)
            flag("bess_power", w, max(pc[t] - uc[t] * s.p_max, uc[t] * s.p_min - pc[t], -pc[t]))
            flag("bess_power", w, max(pd[t] - ud[t] * s.p_max, ud[t] * s.p_min - pd[t], -pd[t]))
            prev = s.e_initial if t == 0 else e[t - 1]
            flag("bess_energy", w, abs(e[t] - prev - dt * (s.eta_charge * pc[t] - pd[t] / s.eta_discharge)))
            flag("bess_energy_bounds", w, max(s.e_min - e[t], e[t] - s.e_max))
            # the SOC swing fed to the network must equal |SOC_t - SOC_{t-1}|
            flag("soc_swing", w, abs(sol.ddod[i, t] - abs(sol.soc[i, t + 1] - sol.soc[i, t])))
        flag("terminal_soc", s.name, abs(e[T - 1] - s.e_initial))

    p = case.profiles
    if case.kind == NETWORK:
        gen_at = {b: [i for i, g in enumerate(case.generators) if g.bus == b] for b in case.buses}
        bess_at = {b: [i for i, s in enumerate(case.bess) if s.bus == b] for b in case.buses}
        col = {k.name: j for j, k in enumerate(case.lines)}
        for b in case.buses:
            inj = sol.P[gen_at[b]].sum(axis=0) + (sol.p_disc[bess_at[b]] - sol.p_char[bess_at[b]]).sum(axis=0)
            for k in case.lines:
                if k.to_bus == b:
                    inj = inj + sol.flow[col[k.name]]
                elif k.from_bus == b:
                    inj = inj - sol.flow[col[k.name]]
            resid = inj - p.net_load(b)
            for t in range(T):
                flag("power_balance", f"{b},{t + 1}", abs(resid[t]))
        th = {b: sol.theta[j] for j, b in enumerate(sol.bus_names)}
        for t in range(T):
            flag("reference_angle", f"{case.reference_bus},{t + 1}", abs(th[case.reference_bus][t]))
        for k in case.lines:
            f = sol.flow[col[k.name]]
            dc = f - case.base_mva * k.susceptance * (th[k.from_bus] - th[k.to_bus])
            for t in range(T):
                w = f"{k.name},{t + 1}"
                flag("line_limit", w, abs(f[t]) - k.limit)
                flag("dc_flow", w, abs(dc[t]))
    else:
        binary("integrality", "ub", sol.u_buy)
        binary("integrality", "us", sol.u_sell)
        load = p.total_load()
        resid = (sol.P.sum(axis=0) + (sol.p_disc - sol.p_char).sum(axis=0) + sol.p_buy - sol.p_sell
                 - (load - p.renewables()))
        headroom = p.grid_limit - sol.p_buy + sol.p_sell + sum(g.p_max for g in case.generators) - sol.P.sum(axis=0)
        for t in range(T):
            w = str(t + 1)
            flag("power_balance", w, abs(resid[t]))
            flag("tie_line", w, sol.p_buy[t] - sol.u_buy[t] * p.grid_limit)
            flag("tie_line", w, sol.p_sell[t] - sol.u_sell[t] * p.grid_limit)
            flag("tie_line", w, sol.u_buy[t] + sol.u_sell[t] - 1.0)
            flag("tie_line", w, max(-sol.p_buy[t], -sol.p_sell[t]))
            flag("reserve", w, p.reserve_ratio * load[t] - headroom[t])
    return ViolationReport(out)


# ---------------------------------------------------------------- replay


@dataclass(frozen=True)
class DegradationReplay:
    bd: np.ndarray  # (S,) SOH loss per BESS
    cost: np.ndarray  # (S,) dollars
    per_interval: np.ndarray  # (S, T)

    @property
    def total_cost(self):
        return float(np.sum(self.cost))


def replay_features(case: Case, sol: ScheduleSolution, i):
    """Raw network inputs of BESS ``i`` for every interval of the schedule."""
    s = case.bess[i]
    T = case.horizon
    return np.column_stack([
        sol.soc[i, :T], sol.ddod[i], np.asarray(case.profiles.temperature, dtype=float), sol.crate[i],
        np.full(T, s.soh_now)])


def recompute_degradation(net: SparseNet, sol: ScheduleSolution, case: Case) -> DegradationReplay:
    """Replay the schedule's features through ``net`` and price the SOH loss."""
    per = np.zeros((len(case.bess), case.horizon))
    for i in range(len(case.bess)):
        per[i] = predict_raw(net, replay_features(case, sol, i))
    bd = per.sum(axis=1)
    cost = np.array([s.degradation_price for s in case.bess]) * bd
    return DegradationReplay(bd, cost, per)


# ---------------------------------------------------------------- export


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(0.0 if x == 0.0 else x)
    return str(x)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_tables(out_dir, case: Case, sol: ScheduleSolution, og: Optional[DegradationReplay] = None):
    """Write dispatch.csv, bess.csv, costs.csv and (network cases) flows.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T = case.horizon
    rows = []
    for t in range(T):
        for i, g in enumerate(case.generators):
            rows.append((t + 1, g.name, "generator", g.bus, int(sol.U[i, t]), int(sol.V[i, t]), sol.P[i, t]))
        if case.kind == MICROGRID:
            rows.append((t + 1, "grid", "buy", case.buses[0], int(sol.u_buy[t]), 0, sol.p_buy[t]))
            rows.append((t + 1, "grid", "sell", case.buses[0], int(sol.u_sell[t]), 0, sol.p_sell[t]))
    _write(out / "dispatch.csv", DISPATCH_HEADER, rows)
    rows = []
    for i, s in enumerate(case.bess):
        for t in range(T):
            rows.append((s.name, t + 1, sol.soc[i, t + 1], sol.p_char[i, t], sol.p_disc[i, t], sol.ddod[i, t],
                         sol.crate[i, t], sol.bd_interval[i, t]))
    _write(out / "bess.csv", BESS_HEADER, rows)
    og_cost = og.total_cost if og is not None else math.nan
    _write(out / "costs.csv", COSTS_HEADER, [(
        sol.operation_cost, sol.degradation_cost, sol.pseudo_total, og_cost, sol.operation_cost + og_cost,
        sol.objective)])
    if case.kind == NETWORK:
        rows = []
        for t in range(T):
            for j, k in enumerate(case.lines):
                rows.append((t + 1, k.name, k.from_bus, k.to_bus, sol.flow[j, t], k.limit))
        _write(out / "flows.csv", FLOWS_HEADER, rows)
    return out
