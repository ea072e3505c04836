"""Case data for day-ahead scheduling: devices, network and 24-hour profiles.

Cases are JSON documents.  A ``"units": "kW"`` case has its power and
energy quantities converted to MW/MWh on load; prices and costs are taken
as given ($/MWh, $/h, $).
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import CaseError

FIXTURES = ("microgrid-1bess", "ieee24-5bess")
NETWORK = "network"
MICROGRID = "microgrid"


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise CaseError(f"{where}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise CaseError(f"{where}: unknown keys {sorted(unknown)}")


def _series(values, horizon, where, scale=1.0):
    arr = np.asarray(values, dtype=float) * scale
    if arr.shape != (horizon,):
        raise CaseError(f"{where}: expected {horizon} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise CaseError(f"{where}: non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    bus: str
    p_min: float
    p_max: float
    ramp: float
    cost: float
    no_load_cost: float = 0.0
    startup_cost: float = 0.0
    initial_on: bool = False

    def validate(self):
        if not 0.0 <= self.p_min <= self.p_max:
            raise CaseError(f"generator {self.name}: need 0 <= p_min <= p_max")
        if not self.ramp > 0.0:
            raise CaseError(f"generator {self.name}: ramp must be positive")
        if min(self.cost, self.no_load_cost, self.startup_cost) < 0.0:
            raise CaseError(f"generator {self.name}: costs must be nonnegative")


@dataclass(frozen=True)
class LineSpec:
    name: str
    from_bus: str
    to_bus: str
    susceptance: float  # per unit, 1 / reactance
    limit: float

    def validate(self):
        if not self.limit > 0.0:
            raise CaseError(f"line {self.name}: limit must be positive")
        if self.susceptance == 0.0 or not math.isfinite(self.susceptance):
            raise CaseError(f"line {self.name}: susceptance must be finite and nonzero")
        if self.from_bus == self.to_bus:
            raise CaseError(f"line {self.name}: both ends on bus {self.from_bus}")


@dataclass(frozen=True)
class BessSpec:
    name: str
    bus: str
    e_max: float
    p_max: float
    e_initial: float
    e_min: float = 0.0
    p_min: float = 0.0
    eta_charge: float = 0.9
    eta_discharge: float = 0.9
    capital_cost: float = 0.0
    salvage_value: float = 0.0
    soh_eol: float = 0.8
    soh_now: float = 1.0

    def validate(self):
        if not (0.0 <= self.e_min <= self.e_initial <= self.e_max and self.e_max > 0.0):
            raise CaseError(f"BESS {self.name}: need 0 <= e_min <= e_initial <= e_max, e_max > 0")
        if not 0.0 <= self.p_min <= self.p_max:
            raise CaseError(f"BESS {self.name}: need 0 <= p_min <= p_max")
        for eta in (self.eta_charge, self.eta_discharge):
            if not 0.0 < eta <= 1.0:
                raise CaseError(f"BESS {self.name}: efficiencies must lie in (0, 1]")
        if not self.salvage_value < self.capital_cost:
            raise CaseError(f"BESS {self.name}: salvage value must be below capital cost")
        if not 0.0 < self.soh_eol < 1.0:
            raise CaseError(f"BESS {self.name}: soh_eol must lie in (0, 1)")
        if not self.soh_eol < self.soh_now <= 1.0:
            raise CaseError(f"BESS {self.name}: soh_now must lie in (soh_eol, 1]")

    @property
    def degradation_price(self):
        """Dollars per unit of SOH lost: (capital - salvage) / (1 - SOH_EOL)."""
        return (self.capital_cost - self.salvage_value) / (1.0 - self.soh_eol)

    @property
    def soc_initial(self):
        return self.e_initial / self.e_max


@dataclass(frozen=True)
class Profiles:
    horizon: int
    dt: float
    load: Dict[str, np.ndarray]
    temperature: np.ndarray
    wind: Dict[str, np.ndarray] = field(default_factory=dict)
    solar: Dict[str, np.ndarray] = field(default_factory=dict)
    buy_price: Optional[np.ndarray] = None
    sell_price: Optional[np.ndarray] = None
    grid_limit: float = 0.0
    reserve_ratio: float = 0.0

    def total_load(self):
        return sum(self.load.values(), np.zeros(self.horizon))

    def renewables(self, bus=None):
        out = np.zeros(self.horizon)
        for series in (self.wind, self.solar):
            for b, v in series.items():
                if bus is None or b == bus:
                    out = out + v
        return out

    def net_load(self, bus):
        return self.load.get(bus, np.zeros(self.horizon)) - self.renewables(bus)


@dataclass(frozen=True)
class Case:
    name: str
    kind: str
    buses: Tuple[str, ...]
    generators: Tuple[GeneratorSpec, ...]
    bess: Tuple[BessSpec, ...]
    profiles: Profiles
    lines: Tuple[LineSpec, ...] = ()
    reference_bus: Optional[str] = None
    base_mva: float = 100.0

    @property
    def horizon(self):
        return self.profiles.horizon

    def without_bess(self):
        return Case(self.name + "-nobess", self.kind, self.buses, self.generators, (), self.profiles,
                    self.lines, self.reference_bus, self.base_mva)

    def bess_by_name(self, name):
        for s in self.bess:
            if s.name == name:
                return s
        raise KeyError(name)

    def validate(self):
        if self.kind not in (NETWORK, MICROGRID):
            raise CaseError(f"unknown case kind {self.kind!r}")
        if len(set(self.buses)) != len(self.buses) or not self.buses:
            raise CaseError("bus ids must be unique and nonempty")
        names = [g.name for g in self.generators] + [s.name for s in self.bess] + [k.name for k in self.lines]
        if len(set(names)) != len(names):
            raise CaseError("device names must be unique")
        for name in names:
            if not name or not all(ch.isalnum() or ch == "_" for ch in name):
                raise CaseError(f"device name {name!r} must be alphanumeric/underscore")
        buses = set(self.buses)
        for dev in self.generators + self.bess:
            dev.validate()
            if dev.bus not in buses:
                raise CaseError(f"{dev.name} references unknown bus {dev.bus}")
        p = self.profiles
        if p.horizon < 1 or not p.dt > 0:
            raise CaseError("horizon must be >= 1 and dt positive")
        for kind, series in (("load", p.load), ("wind", p.wind), ("solar", p.solar)):
            for b, v in series.items():
                if b not in buses:
                    raise CaseError(f"{kind} profile references unknown bus {b}")
                if np.any(v < 0):
                    raise CaseError(f"{kind} profile at bus {b} has negative entries")
        if self.kind == NETWORK:
            self._validate_network(buses)
        else:
            self._validate_microgrid()
        self._check_overgeneration()
        return self

    def _validate_network(self, buses):
        if self.reference_bus is None or self.reference_bus not in buses:
            raise CaseError(f"reference bus {self.reference_bus!r} missing or unknown")
        if not self.base_mva > 0:
            raise CaseError("base_mva must be positive")
        adj = {b: set() for b in buses}
        for k in self.lines:
            k.validate()
            if k.from_bus not in buses or k.to_bus not in buses:
                raise CaseError(f"line {k.name} references an unknown bus")
            adj[k.from_bus].add(k.to_bus)
            adj[k.to_bus].add(k.from_bus)
        seen = {self.reference_bus}
        queue = deque([self.reference_bus])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        if seen != buses:
            raise CaseError(f"network is disconnected; unreachable buses {sorted(buses - seen)}")

    def _validate_microgrid(self):
        p = self.profiles
        if self.lines:
            raise CaseError("microgrid cases have no lines")
        if len(self.buses) != 1:
            raise CaseError("microgrid cases have exactly one bus")
        if p.buy_price is None or p.sell_price is None:
            raise CaseError("microgrid profiles need buy_price and sell_price")
        if not p.grid_limit >= 0 or not 0.0 <= p.reserve_ratio < 1.0:
            raise CaseError("grid_limit must be >= 0 and reserve_ratio in [0, 1)")

    def _check_overgeneration(self):
        # renewables are fixed injections; units can always switch off, so any
        # surplus must fit into storage and export
        p = self.profiles
        sink = sum(s.p_max for s in self.bess) + (p.grid_limit if self.kind == MICROGRID else 0.0)
        surplus = p.renewables() - p.total_load() - sink
        if np.any(surplus > 1e-9):
            t = int(np.argmax(surplus))
            raise CaseError(f"renewable over-generation of {surplus[t]:.6g} MW at t={t + 1} cannot be absorbed")


# ---------------------------------------------------------------- loading

_TOP = {"name", "kind", "units", "base_mva", "reference_bus", "buses", "generators", "lines", "bess",
        "profiles", "description"}
_GEN = {"name", "bus", "p_min", "p_max", "ramp", "cost", "no_load_cost", "startup_cost", "initial_on"}
_LINE = {"name", "from", "to", "susceptance", "reactance", "limit"}
_BESS = {"name", "bus", "e_max", "e_min", "p_max", "p_min", "eta_charge", "eta_discharge", "e_initial",
         "soc_initial", "capital_cost", "salvage_value", "soh_eol", "soh_now"}
_PROF = {"horizon", "dt", "load", "wind", "solar", "temperature", "buy_price", "sell_price", "grid_limit",
         "reserve_ratio"}


def case_from_dict(d) -> Case:
    _check_keys(d, _TOP, "case")
    units = d.get("units", "MW")
    if units not in ("MW", "kW"):
        raise CaseError(f"units must be 'MW' or 'kW', got {units!r}")
    q = 1e-3 if units == "kW" else 1.0
    try:
        kind = d["kind"]
        buses = tuple(str(b) for b in d["buses"])
        gens = []
        for g in d.get("generators", []):
            _check_keys(g, _GEN, "generator")
            gens.append(GeneratorSpec(
                name=str(g["name"]), bus=str(g["bus"]), p_min=q * float(g.get("p_min", 0.0)),
                p_max=q * float(g["p_max"]), ramp=q * float(g.get("ramp", g["p_max"])), cost=float(g["cost"]),
                no_load_cost=float(g.get("no_load_cost", 0.0)), startup_cost=float(g.get("startup_cost", 0.0)),
                initial_on=bool(g.get("initial_on", False))))
        lines = []
        for k in d.get("lines", []):
            _check_keys(k, _LINE, "line")
            if ("susceptance" in k) == ("reactance" in k):
                raise CaseError(f"line {k.get('name')}: give exactly one of susceptance, reactance")
            b = float(k["susceptance"]) if "susceptance" in k else 1.0 / float(k["reactance"])
            lines.append(LineSpec(str(k["name"]), str(k["from"]), str(k["to"]), b, q * float(k["limit"])))
        bess = []
        for s in d.get("bess", []):
            _check_keys(s, _BESS, "bess")
            e_max = q * float(s["e_max"])
            if ("e_initial" in s) == ("soc_initial" in s):
                raise CaseError(f"BESS {s.get('name')}: give exactly one of e_initial, soc_initial")
            e0 = q * float(s["e_initial"]) if "e_initial" in s else e_max * float(s["soc_initial"])
            bess.append(BessSpec(
                name=str(s["name"]), bus=str(s["bus"]), e_max=e_max, p_max=q * float(s["p_max"]), e_initial=e0,
                e_min=q * float(s.get("e_min", 0.0)), p_min=q * float(s.get("p_min", 0.0)),
                eta_charge=float(s.get("eta_charge", 0.9)), eta_discharge=float(s.get("eta_discharge", 0.9)),
                capital_cost=float(s["capital_cost"]), salvage_value=float(s["salvage_value"]),
                soh_eol=float(s.get("soh_eol", 0.8)), soh_now=float(s.get("soh_now", 1.0))))
        pr = d["profiles"]
        _check_keys(pr, _PROF, "profiles")
        T = int(pr.get("horizon", 24))

        def per_bus(key):
            return {str(b): _series(v, T, f"{key}[{b}]", q) for b, v in pr.get(key, {}).items()}

        optional = {k: _series(pr[k], T, k) for k in ("buy_price", "sell_price") if k in pr}
        profiles = Profiles(
            horizon=T, dt=float(pr.get("dt", 1.0)), load=per_bus("load"),
            temperature=_series(pr["temperature"], T, "temperature"), wind=per_bus("wind"), solar=per_bus("solar"),
            grid_limit=q * float(pr.get("grid_limit", 0.0)), reserve_ratio=float(pr.get("reserve_ratio", 0.0)),
            **optional)
        ref = d.get("reference_bus")
        case = Case(
            name=str(d.get("name", "case")), kind=kind, buses=buses, generators=tuple(gens), bess=tuple(bess),
            profiles=profiles, lines=tuple(lines), reference_bus=None if ref is None else str(ref),
            base_mva=float(d.get("base_mva", 100.0)))
    except KeyError as exc:
        raise CaseError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CaseError):
            raise
        raise CaseError(f"malformed case: {exc}") from None
    return case.validate()


def load_case(ref) -> Case:
    """Load a case from a JSON path or a bundled fixture name."""
    if str(ref) in FIXTURES:
        text = resources.files("sparsedispatch.sched").joinpath(f"fixtures/{ref}.json").read_text()
    else:
        path = Path(ref)
        if not path.is_file():
            raise CaseError(f"case file {ref} not found (bundled fixtures: {', '.join(FIXTURES)})")
        text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"case {ref} is not valid JSON: {exc}") from None
    return case_from_dict(d)
