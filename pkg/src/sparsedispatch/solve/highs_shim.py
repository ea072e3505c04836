"""Solver shim: read an MPS file with HiGHS and write a solution file.

Usage::

    python -m sparsedispatch.solve.highs_shim MODEL.mps SOLUTION.sol \
        [--mip-gap G] [--time-limit S] [--feas-tol T]

Any executable honouring the same arguments and solution layout can stand
in for this one (see ``adapter.SOLUTION_FORMAT``).
"""
import argparse
import sys
import time


def main(argv=None):
    p = argparse.ArgumentParser(prog="highs_shim")
    p.add_argument("model")
    p.add_argument("solution")
    p.add_argument("--mip-gap", type=float, default=1e-3)
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--feas-tol", type=float, default=1e-8)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", args.mip_gap)
    h.setOptionValue("time_limit", args.time_limit)
    h.setOptionValue("primal_feasibility_tolerance", args.feas_tol)
    h.setOptionValue("dual_feasibility_tolerance", args.feas_tol)
    h.setOptionValue("mip_feasibility_tolerance", args.feas_tol)
    h.setOptionValue("threads", args.threads)
    h.setOptionValue("random_seed", 0)
    if h.readModel(args.model) != highspy.HighsStatus.kOk:
        print(f"cannot read {args.model}", file=sys.stderr)
        return 4

    t0 = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - t0

    lp = h.getLp()
    is_mip = any(int(v) != 0 for v in lp.integrality_) if len(lp.integrality_) else False
    status = h.getModelStatus()
    info = h.getInfo()
    has_primal = info.primal_solution_status == 2  # kSolutionStatusFeasible
    S = highspy.HighsModelStatus
    if status == S.kOptimal:
        name = "optimal"
    elif status == S.kInfeasible:
        name = "infeasible"
    elif status in (S.kUnbounded, S.kUnboundedOrInfeasible):
        name = "unbounded"
    elif status in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt):
        name = "feasible-gap" if has_primal else "timeout"
    else:
        print(f"unhandled HiGHS status {h.modelStatusToString(status)}", file=sys.stderr)
        return 5

    lines = [f"status {name}"]
    if name in ("optimal", "feasible-gap"):
        obj = info.objective_function_value
        bound = info.mip_dual_bound if is_mip else obj
        gap = info.mip_gap if is_mip else 0.0
        lines += [f"objective {obj!r}", f"bound {bound!r}", f"gap {gap!r}", f"time {elapsed!r}"]
        sol = h.getSolution()
        lines.append(f"columns {lp.num_col_}")
        for n, v in zip(lp.col_names_, sol.col_value):
            lines.append(f"{n} {v!r}")
        if not is_mip and sol.dual_valid:
            lines.append(f"rows {lp.num_row_}")
            for n, d in zip(lp.row_names_, sol.row_dual):
                lines.append(f"{n} {d!r}")
    else:
        lines.append(f"time {elapsed!r}")
    with open(args.solution, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
