"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 environment
(solver missing or misbehaving), 3 infeasible model or failed validation.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .errors import (AdapterError, CaseError, ConfigurationError, ConsistencyError, CouplingError, NetParseError,
                     SolverNotFoundError)

EXIT_OK, EXIT_USAGE, EXIT_ENV, EXIT_INFEASIBLE = 0, 1, 2, 3
SWEEP_SPARSITIES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
ACCURACY_HEADER = ("sparsity", "acc_5", "acc_10", "acc_15", "mse")
LMP_HEADER = ("t", "bus", "lmp", "congested")


class UsageError(Exception):
    pass


class Infeasible(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser():
    p = _Parser(prog="sparsedispatch", description="Degradation-aware day-ahead scheduling with sparse networks.")
    p.add_argument("--config", help="JSON file whose keys supply defaults for the command's flags")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic degradation dataset")
    g.add_argument("--samples", type=int, default=5000)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a (sparse) degradation network")
    t.add_argument("--data", required=True)
    t.add_argument("--mode", choices=("warm", "cold"), default="warm")
    t.add_argument("--sparsity", type=float, default=0.5)
    t.add_argument("--epochs", type=_positive_int, default=300, help="cold-start or dense-phase epochs")
    t.add_argument("--sparse-epochs", type=_positive_int, default=250, help="warm-start fine-tuning epochs")
    t.add_argument("--batch-size", type=_positive_int, default=32)
    t.add_argument("--learning-rate", type=float, default=None)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--out", required=True)
    t.add_argument("--dense-out", help="also write the dense net of a warm start")
    t.add_argument("--log", help="per-epoch log file (default: standard output)")
    t.add_argument("--sweep", action="store_true", help="write an accuracy table over sparsities 0..80%%")
    t.add_argument("--report", help="accuracy table path (default: OUT.accuracy.csv)")

    def case_args(sp):
        sp.add_argument("--case", required=True, help="fixture name or case JSON path")
        d = sp.add_mutually_exclusive_group()
        d.add_argument("--net", help="degradation network file")
        d.add_argument("--no-degradation", action="store_true")
        sp.add_argument("--gap", type=float, default=1e-3)
        sp.add_argument("--time-limit", type=float, default=600.0)
        sp.add_argument("--keep-stable-binaries", action="store_true",
                        help="one ReLU binary per active neuron, even when its sign is fixed")
        sp.add_argument("--out", required=True)

    s = sub.add_parser("schedule", help="solve a day-ahead schedule")
    case_args(s)
    s.add_argument("--og-net", help="dense network used to re-price the schedule (updated total)")

    lm = sub.add_parser("lmp", help="schedule and compute locational marginal prices")
    case_args(lm)
    lm.add_argument("--no-bess", action="store_true", help="drop the BESS fleet from the case")
    lm.add_argument("--bus", help="also print this bus's 24-hour price series")

    b = sub.add_parser("bench", help="sparsity and MIP-gap sweeps")
    b.add_argument("--case", required=True)
    b.add_argument("--sparsities", type=_floats, default=[0.2, 0.3, 0.4, 0.5])
    b.add_argument("--gaps", type=_floats, default=[])
    nets = b.add_mutually_exclusive_group(required=True)
    nets.add_argument("--nets", help="directory with snnNN.net files (NN = sparsity percent) and dense.net")
    nets.add_argument("--data", help="dataset to train warm-start nets from")
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--repeats", type=_positive_int, default=1)
    b.add_argument("--workers", type=_positive_int, default=1)
    b.add_argument("--time-limit", type=float, default=600.0)
    b.add_argument("--keep-stable-binaries", action="store_true")
    b.add_argument("--out", required=True)
    return p


def _apply_config(parser, args, argv):
    if not args.config:
        return args
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    known = set(vars(args)) - {"config", "command"}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for k, v in cfg.items():
        if k not in given:
            setattr(args, k, v)
    return args


# ---------------------------------------------------------------- commands


def cmd_gen_data(args):
    from .oracle import SamplingPlan, generate_dataset

    if args.samples < 1000:
        raise UsageError(f"--samples must be at least 1000, got {args.samples}")
    out = Path(args.out)
    if not out.parent.is_dir():
        raise UsageError(f"output directory {out.parent} does not exist")
    data = generate_dataset(SamplingPlan(n_samples=args.samples), args.seed)
    data.save(out)
    print(f"wrote {len(data)} samples to {out}")
    return EXIT_OK


def _load_data(path):
    from .oracle import Dataset, sidecar_path

    path = Path(path)
    if not path.is_file() or not sidecar_path(path).is_file():
        raise UsageError(f"dataset {path} or its sidecar {sidecar_path(path).name} not found")
    return Dataset.load(path)


def _train_config(args, epochs, sparsity):
    from .network import TrainConfig

    kw = dict(epochs=epochs, batch_size=args.batch_size, seed=args.seed, sparsity=sparsity)
    if args.learning_rate is not None:
        kw["learning_rate"] = args.learning_rate
    return TrainConfig(**kw).validate()


def cmd_train(args):
    from .network import evaluate_accuracy, n_pruned, save_net, stdout_log, train_cold, train_warm

    n_pruned(args.sparsity)  # rejects sparsities that would empty a layer
    data = _load_data(args.data)
    log_fh = open(args.log, "w") if args.log else None
    try:
        log = stdout_log(log_fh)
        dense = None
        if args.mode == "warm":
            dense = train_cold(data, _train_config(args, args.epochs, 0.0), log)
            net = train_warm(dense, data, _train_config(args, args.sparse_epochs, args.sparsity), log,
                             epoch0=args.epochs)
        else:
            net = train_cold(data, _train_config(args, args.epochs, args.sparsity), log)
        rows = []
        if args.sweep:
            for eps in SWEEP_SPARSITIES:
                if eps == args.sparsity:
                    m = net
                elif args.mode == "warm":
                    m = dense if eps == 0.0 else train_warm(dense, data, _train_config(args, args.sparse_epochs, eps))
                else:
                    m = train_cold(data, _train_config(args, args.epochs, eps))
                rows.append((eps, evaluate_accuracy(m, *data.split("test"))))
    finally:
        if log_fh:
            log_fh.close()
    save_net(net, args.out)
    if dense is not None and args.dense_out:
        save_net(dense, args.dense_out)
    rep = evaluate_accuracy(net, *data.split("test"))
    print(f"sparsity {args.sparsity}: " + " ".join(f"acc@{int(round(t * 100))}%={f:.4f}"
                                                   for t, f in rep.fractions.items()) + f" mse={rep.mse:.6g}")
    if args.sweep:
        path = Path(args.report or f"{args.out}.accuracy.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ACCURACY_HEADER)
            for eps, r in rows:
                w.writerow([repr(eps)] + [repr(r.fractions[t]) for t in (0.05, 0.10, 0.15)] + [repr(r.mse)])
        print(f"wrote accuracy table to {path}")
    return EXIT_OK


def _load_net_arg(path):
    from .network import load_net

    if path is None:
        return None
    if not Path(path).is_file():
        raise UsageError(f"network file {path} not found")
    return load_net(path)


def _solve_case(args, case, net):
    from .milp.relu import count_relu_binaries
    from .sched.builder import BuildOptions, build_model
    from .sched.solution import extract_solution, validate_solution
    from .solve.adapter import SolverOptions, run

    build = BuildOptions(eliminate_stable=not args.keep_stable_binaries)
    opts = SolverOptions(mip_gap=args.gap, time_limit=args.time_limit)
    model = build_model(case, net, build)
    res = run(model, opts)
    if not res.has_solution:
        raise Infeasible(f"solver status {res.status}")
    sol = extract_solution(model, res, case)
    report = validate_solution(case, sol)
    summary = {
        "case": case.name, "status": res.status, "objective": res.objective, "gap": res.gap,
        "best_bound": res.best_bound, "wall_time": res.wall_time, "binaries": len(model.binaries()),
        "nn_binaries": count_relu_binaries(model, "nn"), "variables": len(model.variables),
        "constraints": len(model.constraints), "operation_cost": sol.operation_cost,
        "degradation_cost": sol.degradation_cost, "pseudo_total": sol.pseudo_total,
        "violations": len(report),
    }
    return model, sol, report, summary, build, opts


def _require_net(args):
    if args.net is None and not args.no_degradation:
        raise UsageError("give --net NET or --no-degradation")
    return _load_net_arg(args.net)


def cmd_schedule(args):
    from .sched.case import load_case
    from .sched.solution import recompute_degradation, write_tables

    case = load_case(args.case)
    net = _require_net(args)
    og_net = _load_net_arg(args.og_net)
    model, sol, report, summary, _, _ = _solve_case(args, case, net)
    og = recompute_degradation(og_net, sol, case) if og_net is not None and case.bess else None
    out = write_tables(args.out, case, sol, og)
    if og is not None:
        summary["og_degradation_cost"] = og.total_cost
        summary["updated_total"] = sol.operation_cost + og.total_cost
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=1, sort_keys=True))
    if not report.ok:
        print(report, file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_lmp(args):
    from .sched.case import NETWORK, load_case
    from .sched.solution import write_tables
    from .solve.lmp import lmp_from_model

    case = load_case(args.case)
    if args.no_bess:
        case = case.without_bess()
    if args.bus is not None and str(args.bus) not in case.buses:
        raise UsageError(f"unknown bus {args.bus!r}; case buses are {', '.join(case.buses)}")
    net = _require_net(args) if case.bess else _load_net_arg(args.net)
    model, sol, report, summary, _, opts = _solve_case(args, case, net)
    if not report.ok:
        print(report, file=sys.stderr)
        return EXIT_INFEASIBLE
    lmp = lmp_from_model(model, sol.values, opts)
    out = write_tables(args.out, case, sol)
    with open(out / "lmp.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LMP_HEADER)
        for t, b, price, flag in lmp.rows():
            w.writerow([t, b, repr(price), int(flag)])
    if case.kind == NETWORK:
        with open(out / "congestion.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "line", "congested"))
            for j, k in enumerate(lmp.lines):
                for t in range(lmp.congested.shape[1]):
                    w.writerow([t + 1, k, int(lmp.congested[j, t])])
    summary["congested_hours"] = lmp.congested_hours()
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if args.bus is not None:
        series = lmp.prices[lmp.buses.index(str(args.bus))]
        print(f"bus {args.bus} LMP: " + " ".join(f"{v:.4f}" for v in series))
    print(f"congested hours: {summary['congested_hours']}")
    return EXIT_OK


def cmd_bench(args):
    from .bench import run_bench
    from .network import TrainConfig, load_net, train_cold, train_warm
    from .sched.builder import BuildOptions
    from .sched.case import load_case
    from .solve.adapter import SolverOptions

    case = load_case(args.case)
    for eps in args.sparsities:
        if not 0.0 <= eps < 1.0:
            raise UsageError(f"sparsity {eps} outside [0, 1)")
    nets = {}
    if args.nets:
        d = Path(args.nets)
        for eps in args.sparsities:
            path = d / f"snn{int(round(eps * 100)):02d}.net"
            if not path.is_file():
                raise UsageError(f"missing network file {path}")
            nets[eps] = load_net(path)
        og = load_net(d / "dense.net") if (d / "dense.net").is_file() else None
    else:
        data = _load_data(args.data)
        og = train_cold(data, TrainConfig(epochs=300, seed=args.seed))
        for eps in args.sparsities:
            nets[eps] = og if eps == 0.0 else train_warm(og, data, TrainConfig(epochs=250, seed=args.seed,
                                                                               sparsity=eps))
    opts = SolverOptions(time_limit=args.time_limit)
    build = BuildOptions(eliminate_stable=not args.keep_stable_binaries)
    gaps = args.gaps if len(args.gaps) else ()
    if len(gaps) == 1:
        raise UsageError("--gaps needs at least two values")
    report = run_bench(case, nets, og, opts, build, repeats=args.repeats, workers=args.workers, gaps=gaps)
    out = report.write(args.out)
    for r in report.rows:
        print(f"sparsity {r.sparsity:.2f}: status {r.status} nn_binaries {r.nn_binaries} time {r.wall_time:.2f}s "
              f"operation {r.operation_cost:.2f} degradation {r.degradation_cost:.2f} updated {r.updated_total:.2f}"
              + (f" error {r.error}" if r.error else ""))
    for g in report.gap_rows:
        print(f"gap {g.mip_gap}: status {g.status} objective {g.objective:.4f} time {g.wall_time:.2f}s")
    print(f"wrote {out / 'bench.csv'}")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "schedule": cmd_schedule, "lmp": cmd_lmp,
            "bench": cmd_bench}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args = _apply_config(parser, args, argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError, CaseError, CouplingError, NetParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverNotFoundError, AdapterError) as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (Infeasible, ConsistencyError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
