import numpy as np
import pytest

from wfsolve.errors import DisconnectedNetworkError, InputError
from wfsolve.graph import analyze_cycles
from wfsolve.network import (Edge, LossyPipe, Network, Node, Pump, WfInput, build_incidence,
                             flow_oriented_incidence, mass_residual)

from conftest import pipe, random_network


def test_incidence_single_edge():
    net = Network([Node(1), Node(2)], [pipe(1, 2)], 1)
    assert build_incidence(net).tolist() == [[1, -1]]


def test_incidence_triangle(triangle):
    assert build_incidence(triangle).tolist() == [[1, -1, 0], [0, 1, -1], [1, 0, -1]]


def test_incidence_rows_sum_to_zero(rng):
    net = random_network(rng, 25, 16)
    A = build_incidence(net)
    assert A.shape == (40, 25)
    assert np.all(A.sum(axis=1) == 0)
    assert np.all((A == 1).sum(axis=1) == 1) and np.all((A == -1).sum(axis=1) == 1)


def test_mass_residual_examples():
    net = Network([Node(1), Node(2)], [pipe(1, 2)], 1)
    assert mass_residual(net, [5.0], [5.0, -5.0]).tolist() == [0.0, 0.0]
    assert mass_residual(net, [5.0], [4.0, -4.0]).tolist() == [1.0, -1.0]
    with pytest.raises(InputError):
        mass_residual(net, [5.0, 1.0], [4.0, -4.0])


def test_loop_flow_in_null_space(rng):
    net = random_network(rng, 12, 5)
    cs = analyze_cycles(net)
    A = build_incidence(net)
    f = rng.normal(size=net.n_edges)
    d = A.T @ f
    for cyc in cs.cycles:
        assert np.allclose(A.T @ cyc.indicator, 0.0)
        r = mass_residual(net, f + 3.7 * cyc.indicator, d)
        assert np.allclose(r, 0.0, atol=1e-12)


def test_flow_oriented_incidence(triangle):
    A = build_incidence(triangle)
    assert np.array_equal(flow_oriented_incidence(triangle, [1.0, 2.0, 3.0]), A)
    assert np.array_equal(flow_oriented_incidence(triangle, [0.0, 0.0, 0.0]), A)
    Af = flow_oriented_incidence(triangle, [1.0, -2.0, 3.0])
    assert np.array_equal(Af[1], -A[1]) and np.array_equal(Af[[0, 2]], A[[0, 2]])


def test_unbalanced_injections_rejected():
    with pytest.raises(InputError):
        WfInput([1.0, -0.5])
    WfInput([1.0, -1.0 + 1e-12])


def test_network_validation():
    with pytest.raises(InputError):
        Network([Node(1), Node(1)], [], 1)
    with pytest.raises(InputError):
        Network([Node(1), Node(2)], [pipe(1, 3)], 1)
    with pytest.raises(InputError):
        Network([Node(1), Node(2)], [pipe(1, 2)], 9)
    with pytest.raises(DisconnectedNetworkError):
        Network([Node(1), Node(2), Node(3), Node(4)], [pipe(1, 2), pipe(3, 4)], 1)


def test_parameter_validation():
    with pytest.raises(InputError):
        LossyPipe(0.0)
    with pytest.raises(InputError):
        LossyPipe(1.0, rho=0.0)
    with pytest.raises(InputError):
        Pump(1e-5, 0.01, 50.0)
    with pytest.raises(InputError):
        Pump(-1e-5, 0.05, 50.0, f_min=100.0)  # gain increasing at f_min
    LossyPipe.lossless()


def test_parallel_edges_allowed():
    net = Network([Node(1), Node(2)], [pipe(1, 2, eid="a"), pipe(1, 2, eid="b")], 1)
    assert analyze_cycles(net).n_cycles == 1


def test_input_from_mapping():
    net = Network([Node("a"), Node("b")], [Edge("p", "a", "b", Pump(-1e-5, 0.0, 10.0, f_min=1.0))], "a")
    inp = WfInput.from_mapping(net, {"a": 2.0, "b": -2.0}, 5.0, {"p": False})
    assert inp.injections.tolist() == [2.0, -2.0] and not inp.is_on("p")
    with pytest.raises(InputError):
        WfInput.from_mapping(net, {"c": 1.0})
