"""Best-first branch-and-bound over binary variables.

The search is problem-agnostic: the caller supplies ``relax`` (solve a
node's relaxation) and ``branch_rule`` (return children, or ``None`` when
the relaxation solution is already feasible for the mixed-binary problem).
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ..errors import BudgetExceededError


@dataclass(order=True)
class BnbNode:
    bound: float
    seq: int
    fixed: dict = field(default_factory=dict, compare=False)  # binary index -> 0/1
    depth: int = field(default=0, compare=False)
    cuts: list = field(default_factory=list, compare=False)  # node-local cuts
    state: Any = field(default=None, compare=False)  # warm-start data for relax

    def child(self, var: int, value: int, seq: int, bound: float, state=None) -> "BnbNode":
        fixed = dict(self.fixed)
        fixed[var] = value
        return BnbNode(bound, seq, fixed, self.depth + 1, list(self.cuts), state)


@dataclass
class Relaxation:
    status: str  # optimal | infeasible
    value: float = float("inf")
    solution: Any = None
    state: Any = None


@dataclass
class BnbResult:
    status: str  # optimal | infeasible
    value: float
    solution: Any
    nodes: int
    bound: float
    gap: float
    elapsed: float
    incumbents: list = field(default_factory=list)  # objective after each improvement


def most_fractional(values: Sequence[float], candidates: Sequence[int], tol: float = 1e-6) -> Optional[int]:
    """Candidate whose value is closest to 1/2; ties go to the lowest index."""
    best, best_score = None, tol
    for j in sorted(candidates):
        v = float(values[j])
        score = min(v - np.floor(v), np.ceil(v) - v)
        if score > best_score + 1e-12:
            best, best_score = j, score
    return best


def branch_and_bound(root: BnbNode, relax: Callable[[BnbNode], Relaxation],
                     branch_rule: Callable[[BnbNode, Relaxation, Callable[[], int]], Optional[list]],
                     incumbent_cb: Callable[[float, Any], None] | None = None, *,
                     gap_abs: float = 1e-9, gap_rel: float = 1e-9, node_limit: int | None = None,
                     time_limit: float | None = None, dive: bool = False,
                     heuristic: Callable[[BnbNode, Relaxation], Optional[tuple]] | None = None,
                     heuristic_every: int = 10) -> BnbResult:
    """Minimise over the tree rooted at ``root``.

    Nodes are expanded in order of their parent's relaxation value (ties by
    creation order). With ``dive`` the search goes depth-first, first child
    first, until an incumbent exists. ``heuristic(node, rel)`` may return a
    feasible ``(value, solution)``; it runs at the root and then every
    ``heuristic_every`` nodes. A node is pruned when its bound cannot beat
    the incumbent by more than ``max(gap_abs, gap_rel*|incumbent|)``. On
    budget exhaustion :class:`BudgetExceededError` carries the incumbent and
    the remaining gap.
    """
    t0 = time.perf_counter()
    counter = itertools.count(root.seq + 1)
    heap = [root]
    best_val, best_sol = np.inf, None
    history = []
    nodes = 0

    def slack(v):
        return max(gap_abs, gap_rel * abs(v)) if np.isfinite(v) else 0.0

    stack: list = []  # depth-first nodes while diving

    def improve(value, sol):
        nonlocal best_val, best_sol
        best_val, best_sol = value, sol
        history.append(value)
        if incumbent_cb is not None:
            incumbent_cb(value, sol)
        for n in stack:
            heapq.heappush(heap, n)
        stack.clear()

    while heap or stack:
        if (node_limit is not None and nodes >= node_limit) or \
                (time_limit is not None and time.perf_counter() - t0 > time_limit):
            open_bounds = [n.bound for n in stack] + ([heap[0].bound] if heap else [])
            bound = min([best_val] + open_bounds)
            gap = best_val - bound if np.isfinite(best_val) else np.inf
            raise BudgetExceededError(
                f"branch-and-bound budget exhausted after {nodes} nodes", incumbent=best_sol, gap=gap)
        node = stack.pop() if stack else heapq.heappop(heap)
        if node.bound >= best_val - slack(best_val):
            continue
        rel = relax(node)
        nodes += 1
        if rel.status != "optimal" or rel.value >= best_val - slack(best_val):
            continue
        children = branch_rule(node, rel, lambda: next(counter))
        if children is None:
            improve(rel.value, rel.solution)
            continue
        if heuristic is not None and (nodes == 1 or nodes % heuristic_every == 0):
            cand = heuristic(node, rel)
            if cand is not None and cand[0] < best_val - slack(best_val):
                improve(*cand)
        for ch in children:
            ch.bound = max(ch.bound, rel.value)
        if dive and not np.isfinite(best_val):
            stack.extend(reversed(children))
        else:
            for ch in children:
                heapq.heappush(heap, ch)
    elapsed = time.perf_counter() - t0
    if best_sol is None:
        return BnbResult("infeasible", np.inf, None, nodes, np.inf, np.inf, elapsed, history)
    return BnbResult("optimal", best_val, best_sol, nodes, best_val, 0.0, elapsed, history)
