import itertools

import numpy as np
import pytest

from wfsolve.errors import BudgetExceededError, InputError
from wfsolve.opt.bnb import BnbNode, Relaxation, branch_and_bound, most_fractional
from wfsolve.opt.lp import DualSimplex, LpProblem, solve_lp


def vertex_oracle(c, A_ub, b_ub, lb, ub, A_eq=None, b_eq=None):
    """Best basic feasible point by brute force over active constraint sets."""
    n = c.size
    rows = [(a, b) for a, b in zip(A_ub, b_ub)]
    rows += [(np.eye(n)[j], ub[j]) for j in range(n)] + [(-np.eye(n)[j], -lb[j]) for j in range(n)]
    eq = [] if A_eq is None else [(a, b) for a, b in zip(A_eq, b_eq)]
    best = np.inf
    for act in itertools.combinations(range(len(rows)), n - len(eq)):
        M = np.array([r[0] for r in eq] + [rows[k][0] for k in act])
        rhs = np.array([r[1] for r in eq] + [rows[k][1] for k in act])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, rhs)
        if all(a @ x <= b + 1e-9 for a, b in rows) and all(abs(a @ x - b) <= 1e-9 for a, b in eq):
            best = min(best, float(c @ x))
    return best


def test_lp_textbook():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
    p = LpProblem(c=[-3.0, -5.0], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18], lb=[0, 0])
    r = solve_lp(p)
    assert r.optimal and r.value == pytest.approx(-36.0) and np.allclose(r.x, [2.0, 6.0])


def test_lp_equality_and_bounds():
    p = LpProblem(c=[1.0, 2.0, 0.0], A_eq=[[1, 1, 1]], b_eq=[5.0], lb=[0, 0, 0], ub=[2, 10, 1])
    r = solve_lp(p)
    assert r.optimal and r.value == pytest.approx(6.0) and np.allclose(r.x, [2.0, 2.0, 1.0])


def test_lp_infeasible():
    p = LpProblem(c=[1.0, 1.0], A_ub=[[1, 1], [-1, -1]], b_ub=[1.0, -3.0], lb=[0, 0], ub=[5, 5])
    assert solve_lp(p).status == "infeasible"
    p = LpProblem(c=[1.0], lb=[2.0], ub=[1.0])
    assert solve_lp(p).status == "infeasible"


def test_lp_rejects_bad_data():
    with pytest.raises(InputError):
        LpProblem(c=[1.0, np.nan])
    with pytest.raises(InputError):
        LpProblem(c=[1.0], lb=[0.0, 0.0])


def test_lp_random_against_vertices(rng):
    for k in range(50):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 6))
        c = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        x0 = rng.uniform(-1, 1, n)
        b = A @ x0 + rng.uniform(0.0, 2.0, m)  # x0 is feasible
        lb, ub = np.full(n, -3.0), np.full(n, 3.0)
        A_eq = b_eq = None
        if k % 3 == 0:
            A_eq = rng.normal(size=(1, n))
            b_eq = A_eq @ x0
        r = solve_lp(LpProblem(c=c, A_ub=A, b_ub=b, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub))
        assert r.optimal
        assert r.value == pytest.approx(vertex_oracle(c, A, b, lb, ub, A_eq, b_eq), abs=1e-8)


def test_warm_start_after_rows_and_bounds(rng):
    n, m = 4, 4
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    b = A @ np.zeros(n) + 1.0
    lb, ub = np.full(n, -2.0), np.full(n, 2.0)
    lp = DualSimplex.from_problem(LpProblem(c=c, A_ub=A, b_ub=b, lb=lb, ub=ub))
    assert lp.solve().optimal
    extra = rng.normal(size=(2, n))
    lp.add_rows(extra, [-np.inf, -np.inf], [0.5, 0.5])
    lp.set_bounds(0, -1.0, 1.0)
    warm = lp.solve()
    lb2, ub2 = lb.copy(), ub.copy()
    lb2[0], ub2[0] = -1.0, 1.0
    A2, b2 = np.vstack([A, extra]), np.concatenate([b, [0.5, 0.5]])
    assert warm.optimal
    assert warm.value == pytest.approx(vertex_oracle(c, A2, b2, lb2, ub2), abs=1e-8)
    branch = lp.copy()
    branch.set_bounds(1, 0.0, 0.0)
    assert branch.solve().optimal and lp.solve().value == pytest.approx(warm.value)


def test_most_fractional():
    assert most_fractional([0.0, 0.4, 0.9, 0.5], [0, 1, 2, 3]) == 3
    assert most_fractional([0.0, 1.0], [0, 1]) is None
    assert most_fractional([0.5, 0.5], [1, 0]) == 0


class Knapsack:
    """0-1 problem ``min c.x`` s.t. ``A x <= b``, solved by LP branch-and-bound."""

    def __init__(self, c, A, b):
        self.c, self.A, self.b = np.asarray(c, float), np.atleast_2d(A), np.asarray(b, float)

    def relax(self, node):
        n = self.c.size
        lb, ub = np.zeros(n), np.ones(n)
        for j, v in node.fixed.items():
            lb[j] = ub[j] = v
        r = solve_lp(LpProblem(c=self.c, A_ub=self.A, b_ub=self.b, lb=lb, ub=ub))
        if not r.optimal:
            return Relaxation("infeasible")
        return Relaxation("optimal", r.value, r.x)

    def branch(self, node, rel, seq):
        j = most_fractional(rel.solution, range(self.c.size))
        if j is None:
            return None
        return [node.child(j, 0, seq(), rel.value), node.child(j, 1, seq(), rel.value)]

    def brute(self):
        best = np.inf
        for bits in itertools.product((0, 1), repeat=self.c.size):
            x = np.array(bits, float)
            if np.all(self.A @ x <= self.b + 1e-9):
                best = min(best, float(self.c @ x))
        return best


def test_bnb_two_binaries():
    # min -x1 - x2 s.t. x1 + x2 <= 1.5: relaxation -1.5, integer optimum -1
    k = Knapsack([-1.0, -1.0], [[1.0, 1.0]], [1.5])
    res = branch_and_bound(BnbNode(-np.inf, 0), k.relax, k.branch)
    assert res.status == "optimal" and res.value == pytest.approx(-1.0) and res.nodes <= 5


@pytest.mark.parametrize("dive", [False, True])
def test_bnb_against_exhaustive(rng, dive):
    for _ in range(8):
        n = int(rng.integers(4, 13))
        k = Knapsack(-rng.uniform(1, 10, n), rng.uniform(1, 10, (2, n)), rng.uniform(5, 25, 2))
        res = branch_and_bound(BnbNode(-np.inf, 0), k.relax, k.branch, dive=dive)
        assert res.value == pytest.approx(k.brute(), abs=1e-8)
        assert all(a >= b - 1e-12 for a, b in zip(res.incumbents, res.incumbents[1:]))


def test_bnb_infeasible():
    k = Knapsack([1.0, 1.0], [[-1.0, -1.0]], [-3.0])
    assert branch_and_bound(BnbNode(-np.inf, 0), k.relax, k.branch).status == "infeasible"


def test_bnb_node_limit(rng):
    n = 12
    k = Knapsack(-rng.uniform(1, 10, n), rng.uniform(1, 10, (2, n)), [20.0, 20.0])
    with pytest.raises(BudgetExceededError):
        branch_and_bound(BnbNode(-np.inf, 0), k.relax, k.branch, node_limit=1)
