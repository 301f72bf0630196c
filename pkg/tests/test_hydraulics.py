import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wfsolve.energy import solve_gradient_pressure
from wfsolve.errors import InfeasibleError
from wfsolve.hydraulics import (OffPumpMode, apply_off_pumps, edge_residuals, flow_from_drop, flows_from_pressures,
                                head_drop, pressures_from_flows, pump_flow_from_gain, pump_gain, pump_gain_slope)
from wfsolve.network import Edge, Network, Node, WfInput
from wfsolve.graph import particular_flow

from conftest import pipe, random_injections, random_network


def test_head_drop_examples():
    assert head_drop(2.0, 2.0, 3.0) == pytest.approx(18.0)
    assert head_drop(2.0, 2.0, -3.0) == pytest.approx(-18.0)
    assert head_drop(1.0, 1.852, 2.0) == pytest.approx(2.0**1.852)
    assert head_drop(1.0, 2.0, 0.0) == 0.0


def test_head_drop_round_trip(rng):
    c = rng.uniform(1e-4, 10.0, 1000)
    rho = rng.uniform(1.5, 2.5, 1000)
    f = rng.normal(0.0, 100.0, 1000)
    back = flow_from_drop(c, rho, head_drop(c, rho, f))
    assert np.max(np.abs(back - f) / np.maximum(1.0, np.abs(f))) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.2, 3.0), st.floats(-1e3, 1e3))
def test_head_drop_odd_and_monotone(c, rho, f):
    assert head_drop(c, rho, -f) == pytest.approx(-head_drop(c, rho, f))
    assert head_drop(c, rho, f + 1.0) > head_drop(c, rho, f)


def test_pump_gain_bench(bench_pump):
    assert pump_gain(bench_pump, 1000.0) == pytest.approx(41.38, abs=1e-9)
    f = np.linspace(bench_pump.f_min, bench_pump.f_max, 200)
    assert np.all(np.diff(pump_gain(bench_pump, f)) < 0)
    assert np.all(pump_gain_slope(bench_pump, f) < 0)


def test_pump_inverse_vs_bisection(bench_pump, rng):
    for g in rng.uniform(float(pump_gain(bench_pump, 1500.0)), float(pump_gain(bench_pump, 250.0)), 50):
        lo, hi = 250.0, 1500.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if pump_gain(bench_pump, mid) > g else (lo, mid)
        assert pump_flow_from_gain(bench_pump, float(g)) == pytest.approx(0.5 * (lo + hi), abs=1e-9)


def test_pump_inverse_out_of_range(bench_pump):
    with pytest.raises(InfeasibleError):
        pump_flow_from_gain(bench_pump, 100.0)


def test_pressures_from_flows_examples(bench_pump):
    net = Network([Node(1), Node(2)], [pipe(1, 2, c=0.5)], 1)
    assert pressures_from_flows(net, [2.0], 10.0).tolist() == [10.0, 8.0]
    net = Network([Node(1), Node(2)], [Edge("pmp", 1, 2, bench_pump)], 1)
    h = pressures_from_flows(net, [1000.0], 10.0)
    assert h[1] == pytest.approx(51.38, abs=1e-9)
    assert flows_from_pressures(net, h)[0] == pytest.approx(1000.0, abs=1e-9)


def test_tree_round_trip(rng):
    for _ in range(5):
        net = random_network(rng, 12, 0)
        d = random_injections(rng, 12)
        f = particular_flow(net, d)
        h = pressures_from_flows(net, f, 5.0)
        assert h[net.ref_index] == 5.0
        assert np.allclose(flows_from_pressures(net, h), f, atol=1e-9)
        assert np.max(edge_residuals(net, f, h)) <= 1e-9


def _loop_with_pump(bench_pump):
    nodes = [Node(k) for k in range(1, 5)]
    edges = [pipe(1, 2, 1e-4), pipe(2, 3, 2e-4), pipe(3, 4, 1e-4), pipe(4, 1, 3e-4), pipe(1, 3, 2e-4),
             Edge("pmp", 2, 4, bench_pump)]
    return Network(nodes, edges, 1)


def test_off_pump_contract_vs_bypass(bench_pump):
    net = _loop_with_pump(bench_pump)
    d = np.array([60.0, -10.0, -30.0, -20.0])
    inp = WfInput(d, 10.0, {"pmp": False})
    sols = {}
    for mode in (OffPumpMode.CONTRACT, OffPumpMode.BYPASS_PIPE):
        red = apply_off_pumps(net, inp, mode, bypass_c=1e-7)
        dr = red.reduce_injections(d)
        s = solve_gradient_pressure(red.network, dr, 10.0)
        sols[mode] = red.expand(s.flows, s.pressures, d)
    (fc, hc), (fb, hb) = sols[OffPumpMode.CONTRACT], sols[OffPumpMode.BYPASS_PIPE]
    assert apply_off_pumps(net, inp).network.n_nodes == 3
    assert np.allclose(hc, hb, atol=1e-3)
    assert np.allclose(fc, fb, atol=0.05)
    assert hc[1] == pytest.approx(hc[3], abs=1e-12)


def test_off_pump_identity_when_on(bench_pump):
    net = _loop_with_pump(bench_pump)
    red = apply_off_pumps(net, {"pmp": True})
    assert red.identity and red.network is net
