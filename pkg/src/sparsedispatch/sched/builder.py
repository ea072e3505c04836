"""Day-ahead scheduling models: bulk-grid SCUC and grid-connected microgrid.

Both builders share the unit-commitment rows (bounds gated by the on/off
binary, ramps, start-up logic) and the BESS rows (charge/discharge
exclusivity, power bounds, energy recursion, terminal energy).  When a
degradation network is supplied, every BESS and interval gets one embedded
copy of it whose output is priced into the objective.

Variable names (t is 1-based)::

    u_G_t v_G_t p_G_t            generator on, start-up, output
    f_K_t th_B_t                 line flow, bus angle
    uc_S_t ud_S_t pc_S_t pd_S_t  BESS charge/discharge mode and power
    e_S_t                        BESS stored energy at the end of t
    ub_t us_t pb_t ps_t          microgrid buy/sell mode and power
    nn_S_t_*                     embedded degradation network
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import CaseError, CouplingError
from ..milp.model import LinExpr, MilpModel
from ..milp.relu import encode_network
from ..network import SparseNet
from ..oracle import FEATURES
from .case import MICROGRID, NETWORK, BessSpec, Case, Profiles

_RANGE_SLACK = 1e-9


@dataclass(frozen=True)
class BuildOptions:
    # keep a binary for every active neuron instead of dropping the stable ones
    eliminate_stable: bool = True


def _hours(case):
    return _hours_of(case.profiles)


def _add_units(m: MilpModel, case: Case):
    dt = case.profiles.dt
    for g in case.generators:
        for t in _hours(case):
            u = m.add_binary(f"u_{g.name}_{t}")
            v = m.add_binary(f"v_{g.name}_{t}")
            p = m.add_var(f"p_{g.name}_{t}", 0.0, g.p_max)
            m.add_objective(LinExpr({p.name: dt * g.cost, u.name: dt * g.no_load_cost, v.name: g.startup_cost}))
            m.add_constr(p - g.p_min * u, ">=", 0.0, name=f"gmin_{g.name}_{t}", role="gen_bounds")
            m.add_constr(p - g.p_max * u, "<=", 0.0, name=f"gmax_{g.name}_{t}", role="gen_bounds")
            m.add_constr(v - u, "<=", 0.0, name=f"su3_{g.name}_{t}", role="startup")
            if t == 1:
                u0 = 1.0 if g.initial_on else 0.0
                m.add_constr(v - u, ">=", -u0, name=f"su1_{g.name}_{t}", role="startup")
                m.add_constr(LinExpr({v.name: 1.0}), "<=", 1.0 - u0, name=f"su2_{g.name}_{t}", role="startup")
                continue
            up, vp = f"u_{g.name}_{t - 1}", f"p_{g.name}_{t - 1}"
            m.add_constr(LinExpr({v.name: 1.0, u.name: -1.0, up: 1.0}), ">=", 0.0, name=f"su1_{g.name}_{t}",
                         role="startup")
            m.add_constr(LinExpr({v.name: 1.0, up: 1.0}), "<=", 1.0, name=f"su2_{g.name}_{t}", role="startup")
            m.add_constr(LinExpr({p.name: 1.0, vp: -1.0}), "<=", g.ramp * dt, name=f"rup_{g.name}_{t}", role="ramp")
            m.add_constr(LinExpr({vp: 1.0, p.name: -1.0}), "<=", g.ramp * dt, name=f"rdn_{g.name}_{t}", role="ramp")


def _add_bess(m: MilpModel, case: Case):
    dt = case.profiles.dt
    for s in case.bess:
        for t in _hours(case):
            uc = m.add_binary(f"uc_{s.name}_{t}")
            ud = m.add_binary(f"ud_{s.name}_{t}")
            pc = m.add_var(f"pc_{s.name}_{t}", 0.0, s.p_max)
            pd = m.add_var(f"pd_{s.name}_{t}", 0.0, s.p_max)
            e = m.add_var(f"e_{s.name}_{t}", s.e_min, s.e_max)
            m.add_constr(uc + ud, "<=", 1.0, name=f"excl_{s.name}_{t}", role="bess_exclusive")
            m.add_constr(pc - s.p_max * uc, "<=", 0.0, name=f"cmax_{s.name}_{t}", role="bess_power")
            m.add_constr(pc - s.p_min * uc, ">=", 0.0, name=f"cmin_{s.name}_{t}", role="bess_power")
            m.add_constr(pd - s.p_max * ud, "<=", 0.0, name=f"dmax_{s.name}_{t}", role="bess_power")
            m.add_constr(pd - s.p_min * ud, ">=", 0.0, name=f"dmin_{s.name}_{t}", role="bess_power")
            # E_t = E_{t-1} + dt (eta_c Pc - Pd / eta_d), anchored at E_initial
            rec = LinExpr({e.name: 1.0, pc.name: -dt * s.eta_charge, pd.name: dt / s.eta_discharge})
            prev = s.e_initial
            if t > 1:
                rec.add_term(f"e_{s.name}_{t - 1}", -1.0)
                prev = 0.0
            m.add_constr(rec, "=", prev, name=f"ebal_{s.name}_{t}", role="bess_energy")
        m.add_constr(LinExpr({f"e_{s.name}_{case.horizon}": 1.0}), "=", s.e_initial, name=f"eterm_{s.name}",
                     role="bess_terminal")


def _injection(case: Case, bus):
    """Device injections at ``bus``: generators plus BESS discharge minus charge, per t."""
    out = {t: LinExpr() for t in _hours(case)}
    for g in case.generators:
        if g.bus == bus:
            for t in _hours(case):
                out[t].add_term(f"p_{g.name}_{t}", 1.0)
    for s in case.bess:
        if s.bus == bus:
            for t in _hours(case):
                out[t].add_term(f"pd_{s.name}_{t}", 1.0)
                out[t].add_term(f"pc_{s.name}_{t}", -1.0)
    return out


def _objective_with_degradation(m, case, net, opts):
    m.meta.update(kind=case.kind, case=case.name, degradation={}, degradation_price={})
    if net is not None:
        m.meta["target_scale"] = net.normalization.target_scale
        for s in case.bess:
            couple_degradation(m, s, net, case.profiles, opts)


def build_scuc(case: Case, net: Optional[SparseNet] = None, opts: BuildOptions = BuildOptions()) -> MilpModel:
    """Security-constrained unit commitment with DC power flow and BESS."""
    if case.kind != NETWORK:
        raise CaseError(f"build_scuc needs a network case, got {case.kind!r}")
    case.validate()
    m = MilpModel(name=case.name)
    _add_units(m, case)
    _add_bess(m, case)
    for k in case.lines:
        for t in _hours(case):
            m.add_var(f"f_{k.name}_{t}", -np.inf, np.inf)
    for b in case.buses:
        for t in _hours(case):
            if b == case.reference_bus:
                m.add_var(f"th_{b}_{t}", 0.0, 0.0)
            else:
                m.add_var(f"th_{b}_{t}", -np.inf, np.inf)
    for b in case.buses:
        inj = _injection(case, b)
        rhs = case.profiles.net_load(b)
        for t in _hours(case):
            expr = inj[t]
            for k in case.lines:
                if k.to_bus == b:
                    expr.add_term(f"f_{k.name}_{t}", 1.0)
                elif k.from_bus == b:
                    expr.add_term(f"f_{k.name}_{t}", -1.0)
            m.add_constr(expr, "=", float(rhs[t - 1]), name=f"bal_{b}_{t}", role=f"power_balance@{b},{t}")
    for k in case.lines:
        coef = case.base_mva * k.susceptance
        for t in _hours(case):
            f = f"f_{k.name}_{t}"
            m.add_constr(LinExpr({f: 1.0}), "<=", k.limit, name=f"lmax_{k.name}_{t}", role=f"line_limit@{k.name},{t}")
            m.add_constr(LinExpr({f: 1.0}), ">=", -k.limit, name=f"lmin_{k.name}_{t}",
                         role=f"line_limit@{k.name},{t}")
            flow = LinExpr({f: 1.0})
            flow.add_term(f"th_{k.from_bus}_{t}", -coef)
            flow.add_term(f"th_{k.to_bus}_{t}", coef)
            m.add_constr(flow, "=", 0.0, name=f"dc_{k.name}_{t}", role="dc_flow")
    _objective_with_degradation(m, case, net, opts)
    return m


def build_microgrid(case: Case, net: Optional[SparseNet] = None, opts: BuildOptions = BuildOptions()) -> MilpModel:
    """Grid-connected microgrid with tie-line trading and an emergency reserve."""
    if case.kind != MICROGRID:
        raise CaseError(f"build_microgrid needs a microgrid case, got {case.kind!r}")
    case.validate()
    p = case.profiles
    m = MilpModel(name=case.name)
    _add_units(m, case)
    _add_bess(m, case)
    inj = _injection(case, case.buses[0])
    load = p.total_load()
    net_load = load - p.renewables()
    for t in _hours(case):
        ub, us = m.add_binary(f"ub_{t}"), m.add_binary(f"us_{t}")
        pb = m.add_var(f"pb_{t}", 0.0, p.grid_limit)
        ps = m.add_var(f"ps_{t}", 0.0, p.grid_limit)
        m.add_objective(LinExpr({pb.name: p.dt * p.buy_price[t - 1], ps.name: -p.dt * p.sell_price[t - 1]}))
        m.add_constr(pb - p.grid_limit * ub, "<=", 0.0, name=f"buy_{t}", role="tie_line")
        m.add_constr(ps - p.grid_limit * us, "<=", 0.0, name=f"sell_{t}", role="tie_line")
        m.add_constr(ub + us, "<=", 1.0, name=f"trade_{t}", role="tie_line")
        m.add_constr(inj[t] + pb - ps, "=", float(net_load[t - 1]), name=f"bal_{t}",
                     role=f"power_balance@{case.buses[0]},{t}")
        # P_grid_max - Pb + Ps + sum(p_max - P_g) >= R * load
        res = LinExpr({pb.name: -1.0, ps.name: 1.0})
        for g in case.generators:
            res.add_term(f"p_{g.name}_{t}", -1.0)
        headroom = p.grid_limit + sum(g.p_max for g in case.generators)
        m.add_constr(res, ">=", p.reserve_ratio * float(load[t - 1]) - headroom, name=f"res_{t}", role="reserve")
    _objective_with_degradation(m, case, net, opts)
    return m


def build_model(case: Case, net: Optional[SparseNet] = None, opts: BuildOptions = BuildOptions()) -> MilpModel:
    return (build_scuc if case.kind == NETWORK else build_microgrid)(case, net, opts)


# ---------------------------------------------------------------- degradation


def feature_ranges(spec: BessSpec, profiles: Profiles):
    """Raw (lo, hi) per network input and interval implied by the BESS and profiles."""
    dt = profiles.dt
    soc_lo = spec.e_min / spec.e_max
    # per-interval SOC swing is capped by both the power rating and the usable energy
    ddod_hi = min(dt * spec.p_max * max(spec.eta_charge, 1.0 / spec.eta_discharge) / spec.e_max,
                  (spec.e_max - spec.e_min) / spec.e_max)
    out = []
    for t in range(profiles.horizon):
        soc = (spec.soc_initial, spec.soc_initial) if t == 0 else (soc_lo, 1.0)
        temp = float(profiles.temperature[t])
        out.append([soc, (0.0, ddod_hi), (temp, temp), (0.0, ddod_hi / dt), (spec.soh_now, spec.soh_now)])
    return out


def couple_degradation(m: MilpModel, spec: BessSpec, net: SparseNet, profiles: Profiles,
                       opts: BuildOptions = BuildOptions()):
    """Embed one copy of ``net`` per interval and price its output into the objective.

    Network inputs are (SOC at interval start, SOC swing, temperature,
    C-rate, SOH).  The SOC swing is written as dt (eta_c Pc + Pd / eta_d) /
    E_max, which equals |SOC_t - SOC_{t-1}| because charge and discharge are
    mutually exclusive, so no extra binaries are needed.
    """
    norm = net.normalization
    lo, span = norm.lo_array, norm.span
    dt, name = profiles.dt, spec.name
    price = spec.degradation_price
    scale = norm.target_scale
    outputs = []
    for t, ranges in zip(_hours_of(profiles), feature_ranges(spec, profiles)):
        for j, (rlo, rhi) in enumerate(ranges):
            if rlo < lo[j] - _RANGE_SLACK or rhi > lo[j] + span[j] + _RANGE_SLACK:
                raise CouplingError(
                    f"{FEATURES[j]} range [{rlo:.6g}, {rhi:.6g}] of BESS {name} at t={t} exceeds the network "
                    f"normalization [{lo[j]:.6g}, {lo[j] + span[j]:.6g}]")
        prefix = f"nn_{name}_{t}"
        raw = [
            LinExpr(const=spec.soc_initial) if t == 1 else LinExpr({f"e_{name}_{t - 1}": 1.0 / spec.e_max}),
            LinExpr({f"pc_{name}_{t}": dt * spec.eta_charge / spec.e_max,
                     f"pd_{name}_{t}": dt / (spec.eta_discharge * spec.e_max)}),
            LinExpr(const=float(profiles.temperature[t - 1])),
            LinExpr({f"pc_{name}_{t}": spec.eta_charge / spec.e_max,
                     f"pd_{name}_{t}": 1.0 / (spec.eta_discharge * spec.e_max)}),
            LinExpr(const=spec.soh_now),
        ]
        inputs = []
        for j, expr in enumerate(raw):
            rlo, rhi = ranges[j]
            ulo = min(max((rlo - lo[j]) / span[j], 0.0), 1.0)
            uhi = min(max((rhi - lo[j]) / span[j], 0.0), 1.0)
            x = m.add_var(f"{prefix}_in_{j}", ulo, uhi)
            # x = (raw - lo) / span
            m.add_constr(x - expr * (1.0 / span[j]), "=", -lo[j] / span[j], name=f"{prefix}_feat_{j}",
                         role=f"nn_feature@{name},{t}")
            inputs.append(x)
        y = encode_network(m, net, inputs, prefix=prefix, eliminate_stable=opts.eliminate_stable)
        m.add_objective(LinExpr({y.name: price * scale}))
        outputs.append(y.name)
    m.meta.setdefault("degradation", {})[name] = outputs
    m.meta.setdefault("degradation_price", {})[name] = price
    m.meta["target_scale"] = scale
    return outputs


def _hours_of(profiles):
    return range(1, profiles.horizon + 1)
