"""Monte-Carlo benchmark harness.

Each instance is either drawn by :func:`generate_feasible_instance` (with
known ground truth) or obtained by scaling a base demand vector. Instances
are solved independently; the report is assembled in instance order, so
it is identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import BudgetExceededError, InfeasibleError, WfError
from ..hybrid import HybridConfig, dispatch
from ..miqcqp import W2Config, exactness_report, solve_w2
from ..network import Network, WfInput
from .generator import InstanceGenConfig, generate_feasible_instance, scaled_demand_instance

SCHEMA = "wfsolve-bench/1"
THRESHOLDS = (1e-3, 1e-5, 1e-6)


@dataclass(frozen=True)
class BenchConfig:
    gen: InstanceGenConfig = field(default_factory=InstanceGenConfig)
    w2: W2Config = field(default_factory=W2Config)
    solver: str = "miqcqp"  # miqcqp, or any dispatch solver name incl. auto
    mode: str = "generate"  # generate | scale
    base: WfInput | None = None  # required for mode "scale"
    budget: float = 60.0
    workers: int = 1


@dataclass
class InstanceResult:
    index: int
    seed: int
    status: str  # solved | budget | infeasible | error
    time: float
    max_gap: float | None = None
    flow_error: float | None = None
    pressure_error: float | None = None
    nodes: int | None = None
    big_m: float | None = None
    scale: float | None = None
    message: str = ""


def instance_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def success_counts(gaps, thresholds=THRESHOLDS) -> dict:
    """Number of gaps strictly below each threshold."""
    g = np.asarray([x for x in gaps if x is not None], dtype=float)
    return {f"{t:g}": int(np.sum(g < t)) for t in thresholds}


def _instance(net: Network, cfg: BenchConfig, index: int, seed: int):
    truth, scale = None, None
    if cfg.mode == "generate":
        inp, truth = generate_feasible_instance(net, cfg.gen, seed=seed)
    elif cfg.mode == "scale":
        if cfg.base is None:
            raise ValueError("scale mode needs a base input")
        inp, scale = scaled_demand_instance(cfg.base, cfg.gen, seed=seed)
    else:
        raise ValueError(f"unknown mode {cfg.mode!r}")
    return inp, truth, scale


def run_instance(net: Network, cfg: BenchConfig, index: int, seed: int) -> InstanceResult:
    inp, truth, scale = _instance(net, cfg, index, seed)
    w2 = replace(cfg.w2, time_limit=cfg.budget)
    res = InstanceResult(index, seed, "error", 0.0, scale=scale)
    t0 = time.perf_counter()
    try:
        if cfg.solver == "miqcqp":
            sol, rep = solve_w2(net, inp, w2)
            res.nodes, res.big_m = sol.info.get("nodes"), sol.info.get("big_m")
        else:
            sol = dispatch(net, inp, HybridConfig(w2=w2, solver=cfg.solver))
            rep = sol.info.get("report") or exactness_report(net, sol, statuses=inp.pump_status)
        res.status = "solved"
        res.max_gap = float(rep.max_gap)
        if truth is not None:
            res.flow_error = float(np.max(np.abs(sol.flows - truth.flows), initial=0.0))
            res.pressure_error = float(np.max(np.abs(sol.pressures - truth.pressures), initial=0.0))
    except BudgetExceededError as exc:
        res.status, res.message = "budget", str(exc)
    except InfeasibleError as exc:
        res.status, res.message = "infeasible", str(exc)
    except WfError as exc:
        res.message = f"{type(exc).__name__}: {exc}"
    res.time = time.perf_counter() - t0
    return res


def _run_one(args):
    return run_instance(*args)


def run_montecarlo(net: Network, n_instances: int, cfg: BenchConfig | None = None) -> dict:
    """Solve ``n_instances`` random instances and summarize them."""
    cfg = cfg or BenchConfig()
    seeds = instance_seeds(cfg.gen.seed, n_instances)
    jobs = [(net, cfg, i, s) for i, s in enumerate(seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    return build_report(results, cfg, n_instances)


def build_report(results: list[InstanceResult], cfg: BenchConfig, n: int | None = None) -> dict:
    solved = [r for r in results if r.status == "solved"]
    gaps = [r.max_gap for r in solved]
    times = [r.time for r in solved]
    return {
        "schema": SCHEMA,
        "config": {"seed": cfg.gen.seed, "mode": cfg.mode, "solver": cfg.solver, "budget": cfg.budget,
                   "big_m": cfg.w2.big_m, "generator": asdict(cfg.gen)},
        "summary": {
            "instances": len(results) if n is None else n,
            "solved": len(solved),
            "budget_exceeded": sum(r.status == "budget" for r in results),
            "infeasible": sum(r.status == "infeasible" for r in results),
            "errors": sum(r.status == "error" for r in results),
            "below_threshold": success_counts(gaps),
            "median_time": float(np.median(times)) if times else None,
            "mean_time": float(np.mean(times)) if times else None,
            "max_flow_error": max((r.flow_error for r in solved if r.flow_error is not None), default=None),
        },
        "ranked_gaps": sorted(gaps, reverse=True),
        "instances": [asdict(r) for r in results],
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def write_series(report: dict, path) -> None:
    """CSV series for external plotting: rank, ranked gap, instance time."""
    rows = report["instances"]
    ranked = report["ranked_gaps"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "max_gap", "index", "status", "time"])
        for k, r in enumerate(rows):
            w.writerow([k + 1, ranked[k] if k < len(ranked) else "", r["index"], r["status"], f"{r['time']:.6f}"])
