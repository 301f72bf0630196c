import sys

import numpy as np
import pytest

from wfsolve.network import Edge, LossyPipe, Network, Node, Pump


def pipe(a, b, c=1.0, rho=2.0, eid=None):
    return Edge(eid or f"{a}-{b}", a, b, LossyPipe(c, rho))


def random_network(rng, n_nodes, extra_edges, c_range=(0.5, 2.0)):
    """Random connected pump-free network: a random tree plus extra chords."""
    edges = []
    for k in range(1, n_nodes):
        j = int(rng.integers(0, k))
        a, b = (j, k) if rng.random() < 0.5 else (k, j)
        edges.append((a, b))
    have = {frozenset(e) for e in edges}
    tries = 0
    while len(edges) < n_nodes - 1 + extra_edges and tries < 1000:
        tries += 1
        a, b = (int(x) for x in rng.choice(n_nodes, 2, replace=False))
        if frozenset((a, b)) in have:
            continue
        have.add(frozenset((a, b)))
        edges.append((a, b))
    cs = rng.uniform(*c_range, len(edges))
    return Network([Node(k) for k in range(n_nodes)],
                   [pipe(a, b, float(c), eid=f"e{i}") for i, ((a, b), c) in enumerate(zip(edges, cs))], 0)


def random_injections(rng, n, scale=10.0):
    d = rng.normal(0.0, scale, n)
    d -= d.mean()
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle():
    return Network([Node(1), Node(2), Node(3)], [pipe(1, 2), pipe(2, 3), pipe(1, 3)], 1)


@pytest.fixture
def bench_pump():
    return Pump(-2.735e-5, 0.0129, 55.83, 250.0, 1500.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
