"""Out-of-process MILP solving through MPS files.

A solver is any executable invoked as::

    SOLVER MODEL.mps SOLUTION.sol --mip-gap G --time-limit S --feas-tol T

that exits 0 and writes SOLUTION.sol in the layout below.  The bundled
HiGHS shim is used unless ``SPARSEDISPATCH_SOLVER`` names another one.
"""
from __future__ import annotations

import importlib.util
import math
import os
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import AdapterError, ConfigurationError, SolverNotFoundError
from ..milp.formats import emit_mps, sanitize
from ..milp.model import MilpModel

SOLVER_ENV = "SPARSEDISPATCH_SOLVER"

SOLUTION_FORMAT = """\
status <optimal|feasible-gap|infeasible|unbounded|timeout>
objective <float>          (optimal / feasible-gap only)
bound <float>              (best dual bound)
gap <float>                (achieved relative gap)
time <seconds>
columns <n>
<column name> <value>      (n lines)
rows <m>                   (LP solves only)
<row name> <dual>          (m lines, d objective / d rhs)
"""

OPTIMAL = "optimal"
FEASIBLE_GAP = "feasible-gap"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIMEOUT = "timeout"
STATUSES = (OPTIMAL, FEASIBLE_GAP, INFEASIBLE, UNBOUNDED, TIMEOUT)


@dataclass(frozen=True)
class SolverOptions:
    mip_gap: float = 1e-3
    time_limit: float = 600.0
    solver: str = "highs"
    scratch_dir: Optional[str] = None
    feas_tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.mip_gap < 1.0:
            raise ConfigurationError(f"mip_gap must lie in [0, 1), got {self.mip_gap}")
        if not self.time_limit > 0:
            raise ConfigurationError(f"time_limit must be positive, got {self.time_limit}")


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    best_bound: float = math.nan
    gap: float = math.nan
    values: dict = field(default_factory=dict)
    duals: Optional[dict] = None
    wall_time: float = math.nan  # solver-reported solve time
    elapsed: float = math.nan  # including process start and file I/O

    @property
    def has_solution(self):
        return self.status in (OPTIMAL, FEASIBLE_GAP)


def solver_command(opts: SolverOptions):
    override = os.environ.get(SOLVER_ENV)
    if override:
        path = shutil.which(override) or override
        if not (os.path.isfile(path) and os.access(path, os.X_OK)):
            raise SolverNotFoundError(f"{SOLVER_ENV}={override!r} is not an executable file")
        return [path]
    if opts.solver == "highs":
        if importlib.util.find_spec("highspy") is None:
            raise SolverNotFoundError("highspy is not installed; install it or set " + SOLVER_ENV)
        return [sys.executable, "-m", "sparsedispatch.solve.highs_shim"]
    path = shutil.which(opts.solver)
    if path is None:
        raise SolverNotFoundError(f"solver executable {opts.solver!r} not found on PATH")
    return [path]


def parse_solution(text: str) -> SolveResult:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0][0] != "status" or len(lines[0]) != 2 or lines[0][1] not in STATUSES:
        raise AdapterError("solution file lacks a valid status line", text[:2000])
    res = SolveResult(status=lines[0][1])
    i = 1
    keys = {"objective": "objective", "bound": "best_bound", "gap": "gap", "time": "wall_time"}
    try:
        while i < len(lines) and lines[i][0] in keys:
            setattr(res, keys[lines[i][0]], float(lines[i][1]))
            i += 1
        if i < len(lines) and lines[i][0] == "columns":
            n = int(lines[i][1])
            res.values = {name: float(v) for name, v in lines[i + 1 : i + 1 + n]}
            if len(res.values) != n:
                raise AdapterError("truncated column section", text[:2000])
            i += 1 + n
        if i < len(lines) and lines[i][0] == "rows":
            n = int(lines[i][1])
            res.duals = {name: float(v) for name, v in lines[i + 1 : i + 1 + n]}
            if len(res.duals) != n:
                raise AdapterError("truncated row section", text[:2000])
            i += 1 + n
    except (ValueError, IndexError) as exc:
        raise AdapterError(f"malformed solution file: {exc}", text[:2000]) from None
    if i != len(lines):
        raise AdapterError(f"unexpected content at line {i + 1}", text[:2000])
    if res.has_solution and not res.values and not math.isfinite(res.objective):
        raise AdapterError("solution status without values", text[:2000])
    return res


def run(model: MilpModel, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Solve ``model`` with the configured external solver."""
    cmd = solver_command(opts)
    own_dir = opts.scratch_dir is None
    scratch = Path(tempfile.mkdtemp(prefix="sparsedispatch-")) if own_dir else Path(opts.scratch_dir)
    scratch.mkdir(parents=True, exist_ok=True)
    mps = scratch / "model.mps"
    sol = scratch / "solution.sol"
    if sol.exists():
        sol.unlink()
    mps.write_text(emit_mps(model))
    args = cmd + [str(mps), str(sol), "--mip-gap", repr(opts.mip_gap), "--time-limit",
                  repr(float(opts.time_limit)), "--feas-tol", repr(opts.feas_tol)]
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(args, capture_output=True, text=True, timeout=opts.time_limit + 120)
    except FileNotFoundError as exc:
        raise SolverNotFoundError(str(exc)) from None
    except subprocess.TimeoutExpired:
        return SolveResult(status=TIMEOUT, elapsed=time.perf_counter() - t0)
    elapsed = time.perf_counter() - t0
    if proc.returncode != 0 or not sol.exists():
        raise AdapterError(f"solver exited with code {proc.returncode}", (proc.stdout + proc.stderr)[-4000:])
    res = parse_solution(sol.read_text())
    res.elapsed = elapsed
    if not math.isfinite(res.wall_time):
        res.wall_time = elapsed
    if own_dir:
        shutil.rmtree(scratch, ignore_errors=True)
    if res.has_solution:
        res.values = {n: res.values[sanitize(n)] for n in model.variables if sanitize(n) in res.values}
        if res.duals is not None:
            res.duals = {n: res.duals[sanitize(n)] for n in model.constraints if sanitize(n) in res.duals}
    missing = set(model.variables) - set(res.values) if res.has_solution else set()
    if missing:
        raise AdapterError(f"solution misses {len(missing)} columns, e.g. {sorted(missing)[:3]}")
    return res
