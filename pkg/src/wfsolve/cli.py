"""Command-line interface.

Exit codes: 0 solved and exact, 2 inexact or candidate solution,
3 infeasible, 4 budget exhausted (or no convergence), 5 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import (BudgetExceededError, InfeasibleError, InputError, NonConvergenceError,
                     UnsupportedNetworkError, WfError)
from .hybrid import HybridConfig, dispatch, route
from .hydraulics import OffPumpMode, apply_off_pumps
from .miqcqp import W2Config, build_w2, exactness_report
from .network import Edge, LossyPipe, Network
from .io import native
from .io.generator import InstanceGenConfig, generate_feasible_instance
from .io.inp import read_inp
from .io.montecarlo import BenchConfig, run_montecarlo, write_report, write_series

EXIT_OK, EXIT_INEXACT, EXIT_INFEASIBLE, EXIT_BUDGET, EXIT_INPUT = 0, 2, 3, 4, 5
SOLVERS = ("auto", "tree", "energy", "stitch", "miqcqp", "hybrid")


def _with_rho(net: Network, rho: float) -> Network:
    edges = [e if e.is_pump or e.kind.is_lossless else Edge(e.id, e.tail, e.head, LossyPipe(e.kind.c, rho))
             for e in net.edges]
    return Network(net.nodes, edges, net.reference)


def _w2_config(args) -> W2Config:
    kw = {}
    if getattr(args, "big_m", None) is not None:
        kw["big_m"] = args.big_m
    if getattr(args, "budget", None) is not None:
        kw["time_limit"] = args.budget
    if getattr(args, "retry_big_m", None) is not None:
        kw["retry_big_m"] = args.retry_big_m
    return W2Config(**kw)


def cmd_solve(args) -> int:
    net, inp, _ = native.load(args.file)
    if args.rho is not None:
        net = _with_rho(net, args.rho)
    cfg = HybridConfig(w2=_w2_config(args), solver=args.solver)
    sol = dispatch(net, inp, cfg)
    rep = sol.info.get("report") or exactness_report(net, sol, statuses=inp.pump_status)
    exact = sol.status == "solved" and rep.exact
    out = {"status": sol.status if exact or sol.status != "solved" else "inexact",
           "solver": sol.info.get("solver"), "topology": sol.info.get("topology"),
           "max_gap": rep.max_gap, "residual_mass": sol.residual_mass,
           "max_edge_residual": sol.max_edge_residual, "warnings": list(sol.warnings),
           "flows": [[k, v] for k, v in sol.flow_map(net).items()],
           "pressures": [[k, v] for k, v in sol.pressure_map(net).items()]}
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK if exact else EXIT_INEXACT


def cmd_classify(args) -> int:
    net, inp, _ = native.load(args.file)
    cls, solver = route(net, inp)
    print(json.dumps({"topology": cls.value, "solver": solver}))
    return EXIT_OK


def cmd_gen(args) -> int:
    net, base, meta = native.load(args.file)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    cfg = InstanceGenConfig(seed=args.seed)
    stem = Path(args.file).stem
    for k in range(args.n):
        seed = args.seed + k
        inp, truth = generate_feasible_instance(net, cfg, seed=seed)
        truth_meta = {"seed": seed, "truth": {"flows": truth.flows.tolist(), "pressures": truth.pressures.tolist()}}
        path = out / f"{stem}_{k:03d}.json"
        native.save(path, net, inp, truth_meta)
        print(path)
    return EXIT_OK


def cmd_bench(args) -> int:
    net, base, _ = native.load(args.file)
    gen = InstanceGenConfig(seed=args.seed)
    cfg = BenchConfig(gen=gen, w2=_w2_config(args), solver=args.solver, mode=args.mode,
                      base=base if args.mode == "scale" else None, budget=args.budget or 60.0,
                      workers=args.workers)
    report = run_montecarlo(net, args.n, cfg)
    write_report(report, args.out)
    if args.series:
        write_series(report, args.series)
    print(json.dumps(report["summary"], indent=2))
    return EXIT_OK


def cmd_export_conic(args) -> int:
    net, inp, _ = native.load(args.file)
    red = apply_off_pumps(net, inp, OffPumpMode.CONTRACT)
    d = red.reduce_injections(inp.injections)
    model = build_w2(red.network, d, args.big_m or 300.0, inp.reference_pressure)
    text = model.to_conic().to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_convert(args) -> int:
    model = read_inp(args.inp, keep_hazen_williams=args.keep_hazen_williams)
    for w in model.warnings:
        print(f"warning: {w}", file=sys.stderr)
    native.save(args.native, model.network, model.input)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wfsolve", description="Water-flow solvers for pressurized networks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the instance stored in a native file")
    p.add_argument("file")
    p.add_argument("--solver", choices=SOLVERS, default="auto")
    p.add_argument("--big-m", type=float)
    p.add_argument("--retry-big-m", type=float)
    p.add_argument("--rho", type=float, help="override every pipe's flow exponent")
    p.add_argument("--budget", type=float, help="time budget in seconds for the mixed-integer solver")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("classify", help="print the topology class and the solver it maps to")
    p.add_argument("file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gen", help="write random feasible instances with their ground truth")
    p.add_argument("file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-n", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="Monte-Carlo benchmark")
    p.add_argument("file")
    p.add_argument("-n", type=int, default=100)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--series", help="CSV series path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("generate", "scale"), default="generate")
    p.add_argument("--solver", choices=SOLVERS, default="miqcqp")
    p.add_argument("--big-m", type=float)
    p.add_argument("--retry-big-m", type=float)
    p.add_argument("--budget", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-conic", help="write the mixed-integer model in conic text form")
    p.add_argument("file")
    p.add_argument("--big-m", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_conic)

    p = sub.add_parser("convert", help="convert an EPANET INP file to the native format")
    p.add_argument("inp")
    p.add_argument("native")
    p.add_argument("--keep-hazen-williams", action="store_true")
    p.set_defaults(func=cmd_convert)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BudgetExceededError, NonConvergenceError) as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, UnsupportedNetworkError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except WfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
