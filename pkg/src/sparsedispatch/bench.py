"""Sparsity and MIP-gap benchmark sweeps over one scheduling case."""
from __future__ import annotations

import csv
import dataclasses
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .milp.relu import count_relu_binaries
from .network import SparseNet
from .sched.builder import BuildOptions, build_model
from .sched.case import Case
from .sched.solution import extract_solution, recompute_degradation
from .solve.adapter import SolverOptions, run
from .solve.lmp import GapRow, gap_sweep

BENCH_HEADER = ("sparsity", "operation_cost", "degradation_cost", "updated_total", "nn_binaries", "wall_time",
                "status", "objective", "gap", "error")
GAP_HEADER = ("mip_gap", "status", "objective", "best_bound", "achieved_gap", "wall_time")


@dataclass(frozen=True)
class BenchRow:
    sparsity: float
    operation_cost: float
    degradation_cost: float
    updated_total: float
    nn_binaries: int
    wall_time: float  # median over repeats
    status: str
    objective: float = math.nan
    gap: float = math.nan
    error: str = ""


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    gap_rows: list = field(default_factory=list)

    def row(self, sparsity):
        for r in self.rows:
            if r.sparsity == sparsity:
                return r
        raise KeyError(sparsity)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "bench.csv", BENCH_HEADER, self.rows)
        if self.gap_rows:
            _write_rows(out / "gaps.csv", GAP_HEADER, self.gap_rows)
        return out


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in dataclasses.astuple(r)])


def run_scenario(case: Case, net: SparseNet, og_net: Optional[SparseNet] = None,
                 opts: SolverOptions = SolverOptions(), build: BuildOptions = BuildOptions(), repeats=1) -> BenchRow:
    """Build, solve ``repeats`` times and summarize one sparsity level."""
    model = build_model(case, net, build)
    n_bin = count_relu_binaries(model, "nn")
    times = []
    res = None
    for _ in range(repeats):
        res = run(model, opts)
        times.append(res.wall_time)
    wall = statistics.median(times)
    if not res.has_solution:
        return BenchRow(net.sparsity, math.nan, math.nan, math.nan, n_bin, wall, res.status)
    sol = extract_solution(model, res, case)
    updated = math.nan
    if og_net is not None:
        updated = sol.operation_cost + recompute_degradation(og_net, sol, case).total_cost
    return BenchRow(net.sparsity, sol.operation_cost, sol.degradation_cost, updated, n_bin, wall, res.status,
                    res.objective, res.gap)


def run_bench(case: Case, nets: dict, og_net: Optional[SparseNet] = None, opts: SolverOptions = SolverOptions(),
              build: BuildOptions = BuildOptions(), repeats=1, workers=1, gaps=(), gap_net=None) -> BenchReport:
    """One row per net in ``nets`` (keyed by sparsity) plus an optional gap sweep.

    Scenarios run concurrently on ``workers`` threads, each driving its own
    solver process; a failing scenario is recorded in its row and the sweep
    continues.  Rows are ordered by sparsity whatever the completion order.
    """

    def job(eps):
        try:
            return run_scenario(case, nets[eps], og_net, opts, build, repeats)
        except Exception as exc:  # recorded in-row, the sweep goes on
            return BenchRow(eps, math.nan, math.nan, math.nan, -1, math.nan, "error", error=f"{type(exc).__name__}: {exc}")

    keys = sorted(nets)
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        rows = list(pool.map(job, keys))
    report = BenchReport(rows=rows)
    if gaps:
        model = build_model(case, gap_net if gap_net is not None else nets[keys[-1]], build)
        report.gap_rows = gap_sweep(model, gaps, opts)
    return report


__all__ = ["BenchRow", "BenchReport", "GapRow", "run_bench", "run_scenario"]
