import itertools
from dataclasses import replace

import numpy as np
import pytest

from wfsolve.conic import ConicModel
from wfsolve.energy import solve_gradient_pressure
from wfsolve.errors import InfeasibleError, InputError
from wfsolve.graph import analyze_cycles
from wfsolve.hydraulics import pump_gain
from wfsolve.io.cases import BENCH_PUMP, disparate4, hybrid23, net2_like
from wfsolve.io.generator import InstanceGenConfig, generate_feasible_instance
from wfsolve.miqcqp import (W2Config, _solve_model, build_w2, exactness_report, presolve_lemma3, solve_w2,
                            w2_objective)
from wfsolve.network import Edge, Network, Node, WfInput

from conftest import pipe, random_network

ALL_ON = InstanceGenConfig(pump_on_prob=1.0)


def pump_triangle():
    """Triangle carrying a pump, with a pendant pipe: non-overlapping cycles."""
    nodes = [Node(k) for k in range(1, 5)]
    edges = [Edge("pmp", 1, 2, BENCH_PUMP), pipe(2, 3, 2e-4), pipe(1, 3, 3e-4), pipe(3, 4, 1e-4)]
    return Network(nodes, edges, 1)


def test_single_pipe_structure():
    net = Network([Node(1), Node(2)], [pipe(1, 2)], 1)
    cm = build_w2(net, [3.0, -3.0]).compile()
    assert len(cm.binaries) == 1
    assert cm.tag_count("dir") + cm.tag_count("loss_") == 4
    assert cm.tag_count("mass") == 1


def test_pump_has_no_binary():
    net = Network([Node(1), Node(2)], [Edge("p", 1, 2, BENCH_PUMP)], 1)
    m = build_w2(net, [300.0, -300.0])
    cm = m.compile()
    assert not cm.binaries and cm.tag_count("pump") == 1
    assert m.flow_bounds(0)[0] == BENCH_PUMP.f_min


def test_build_rejects_bad_input(triangle):
    with pytest.raises(InputError):
        build_w2(triangle, [1.0, 0.0, 0.0])
    with pytest.raises(InputError):
        build_w2(triangle, [1.0, -1.0, 0.0], M=0.0)
    with pytest.raises(InputError):
        W2Config(big_m=-1.0)


def _n_binaries(net, d):
    return len(presolve_lemma3(net, d, build_w2(net, d)).binary_edges())


def test_presolve_counts(rng, triangle):
    tree = random_network(rng, 10, 0)
    assert _n_binaries(tree, np.r_[9.0, -np.ones(9)]) == 0
    assert _n_binaries(triangle, [2.0, -1.0, -1.0]) == 3
    net2, inp = net2_like()
    cs = analyze_cycles(net2)
    assert _n_binaries(net2, inp.injections) == len(cs.cycle_edges) == 19
    h23 = hybrid23()
    inp, _ = generate_feasible_instance(h23, ALL_ON, seed=1)
    cs = analyze_cycles(h23)
    on_cycles = {p for p in cs.cycle_edges if not h23.edges[p].is_pump}
    model = presolve_lemma3(h23, inp.injections, build_w2(h23, inp))
    assert set(model.binary_edges()) == on_cycles and len(on_cycles) == 17


@pytest.mark.parametrize("seed", range(4))
def test_generated_instance_is_exact(seed):
    net = pump_triangle()
    inp, truth = generate_feasible_instance(net, ALL_ON, seed=seed)
    sol, rep = solve_w2(net, inp)
    assert rep.exact and sol.status == "solved"
    assert np.allclose(sol.flows, truth.flows, rtol=1e-4, atol=1e-6)
    assert np.allclose(sol.pressures, truth.pressures, rtol=1e-4, atol=1e-6)


def test_big_m_invariance():
    net = pump_triangle()
    inp, _ = generate_feasible_instance(net, ALL_ON, seed=7)
    a, _ = solve_w2(net, inp, W2Config(big_m=300.0))
    b, _ = solve_w2(net, inp, W2Config(big_m=1200.0))
    assert np.allclose(a.flows, b.flows, atol=1e-6) and np.allclose(a.pressures, b.pressures, atol=1e-6)


def test_gaps_nonnegative_at_relaxed_points(rng):
    """On trees every flow vector is fixed by mass balance; inflating pipe
    drops and shrinking pump rises gives points that satisfy the relaxation."""
    for _ in range(10):
        base = random_network(rng, 8, 0, c_range=(1e-4, 4e-4))
        edges = list(base.edges)
        k = int(rng.integers(0, len(edges)))
        e = edges[k]
        edges[k] = Edge("pmp", e.tail, e.head, BENCH_PUMP)
        net = Network(base.nodes, edges, base.reference)
        f = rng.uniform(-300, 300, net.n_edges)
        f[k] = rng.uniform(300, 1200)
        h = np.zeros(net.n_nodes)
        order = sorted(range(net.n_edges), key=lambda p: min(net.tails[p], net.heads[p]))
        known = {net.ref_index}
        while len(known) < net.n_nodes:
            for p in order:
                m, n = net.tails[p], net.heads[p]
                if (m in known) == (n in known):
                    continue
                if p == k:
                    drop = -float(pump_gain(BENCH_PUMP, f[p])) + rng.uniform(0, 5)
                else:
                    drop = np.sign(f[p]) * (net.edges[p].kind.c * f[p] ** 2 + rng.uniform(0, 5))
                if m in known:
                    h[n] = h[m] - drop
                    known.add(n)
                else:
                    h[m] = h[n] + drop
                    known.add(m)
        rep = exactness_report(net, (f, h))
        assert min(np.nanmin(rep.pipe_gaps), np.nanmin(rep.pump_gaps)) >= -1e-8


def test_pump_free_matches_energy(rng):
    net = random_network(rng, 9, 4, c_range=(1e-4, 4e-4))
    d = np.zeros(9)
    d[0] = 400.0
    d[1:] = -400.0 / 8
    inp = WfInput(d, 20.0)
    sol, rep = solve_w2(net, inp)
    ref = solve_gradient_pressure(net, d, 20.0)
    assert rep.exact
    assert np.max(np.abs(sol.flows - ref.flows)) <= 1e-4 * np.max(np.abs(ref.flows))


@pytest.mark.parametrize("seed", range(4))
def test_penalty_orders_direction_patterns(seed):
    """No direction pattern beats the true one. A tie is only possible when
    the optimum leaves a pipe at zero flow: the pump cycle then adds no
    penalty while a pipe on it keeps slack."""
    net = pump_triangle()
    inp, truth = generate_feasible_instance(net, ALL_ON, seed=seed)
    model = build_w2(net, inp)
    pipes = model.lossy()
    best = w2_objective(net, truth.pressures)
    true_dirs = {p: int(truth.flows[p] >= 0) for p in pipes}
    strict = 0
    for bits in itertools.product((0, 1), repeat=len(pipes)):
        dirs = dict(zip(pipes, bits))
        if dirs == true_dirs:
            continue
        try:
            res = _solve_model(replace(model, fixed_dirs=dirs), W2Config(tie_break=False))
        except InfeasibleError:
            continue
        assert res.objective >= best - 1e-8
        if res.objective > best + 1e-6:
            strict += 1
        else:
            assert np.min(np.abs(res.f[pipes])) <= 1e-6
    assert strict > 0


def test_disparate_counterexample_is_inexact():
    net, inp = disparate4()
    sol, rep = solve_w2(net, inp)
    assert sol.status == "inexact" and rep.max_gap > 1.0
    assert rep.worst_edge == net.edge_index("1-3")
    assert sol.residual_mass <= 1e-6  # mass balance still holds


def test_conic_export_round_trip():
    net = pump_triangle()
    inp, _ = generate_feasible_instance(net, ALL_ON, seed=0)
    cm = build_w2(net, inp).to_conic()
    text = cm.to_text()
    back = ConicModel.from_text(text)
    assert back.to_text() == text
    # no presolve: every lossy pipe has a binary and two loss rows, plus one pump row
    assert len(back.binaries) == 3 and len(back.qcuts) == 3 * 2 + 1
    assert back.n_rows == cm.n_rows


def test_off_pumps_are_contracted():
    net = pump_triangle()
    inp, truth = generate_feasible_instance(net, InstanceGenConfig(pump_on_prob=0.0), seed=2)
    sol, rep = solve_w2(net, inp)
    assert rep.exact
    assert sol.pressures[0] == pytest.approx(sol.pressures[1])
    assert np.allclose(sol.flows, truth.flows, rtol=1e-4, atol=1e-4)
