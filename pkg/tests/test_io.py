import csv
import json
import math

import numpy as np
import pytest

from wfsolve import cli
from wfsolve.errors import InfeasibleError, InputError, ParseError
from wfsolve.io import native
from wfsolve.io.cases import BENCH_PUMP, disparate4, hybrid23, net10, net2_like
from wfsolve.io.generator import InstanceGenConfig, generate_feasible_instance, scaled_demand_instance
from wfsolve.io.inp import hazen_c, parse_inp
from wfsolve.io.montecarlo import BenchConfig, instance_seeds, run_montecarlo, success_counts, write_series
from wfsolve.network import Edge, LossyPipe, Network, Node, Pump, WfInput

from conftest import pipe

MINIMAL_INP = """
[TITLE]
two junctions fed by a reservoir
[JUNCTIONS]
;ID  Elev  Demand
 J1  5     36
 J2  3     72
[RESERVOIRS]
 R1  40
[PIPES]
;ID  N1  N2  Length  Diam  Rough
 P1  R1  J1  1000    300   0.1
 P2  J1  J2  500     200   0.1
[OPTIONS]
 UNITS     CMH
 HEADLOSS  D-W
[END]
"""


# ---------------------------------------------------------------------------
# native format

def test_native_round_trip(tmp_path):
    net = hybrid23()
    inp, _ = generate_feasible_instance(net, InstanceGenConfig(pump_on_prob=0.5), seed=3)
    path = tmp_path / "h23.json"
    native.save(path, net, inp, {"note": "x"})
    net2, inp2, meta = native.load(path)
    assert net2.node_ids == net.node_ids and net2.edge_ids == net.edge_ids
    assert net2.reference == net.reference
    for a, b in zip(net.edges, net2.edges):
        assert (a.tail, a.head, a.kind) == (b.tail, b.head, b.kind)
    assert np.array_equal(inp2.injections, inp.injections)
    assert inp2.pump_status == inp.pump_status and meta == {"note": "x"}
    assert native.dumps(net2, inp2, meta) == native.dumps(net, inp, meta)


def test_native_infinite_pump_range():
    net = Network([Node(1), Node(2)], [Edge("p", 1, 2, Pump(-1e-5, 0.0, 40.0))], 1)
    doc = json.loads(native.dumps(net))
    assert doc["pumps"][0]["f_max"] is None
    back, _, _ = native.loads(json.dumps(doc))
    assert math.isinf(back.edges[0].kind.f_max)


def test_native_errors():
    with pytest.raises(ParseError) as err:
        native.loads('{"format": "wfsolve-network",\n "version": 1,\n "nodes": [}')
    assert err.value.line == 3
    with pytest.raises(InputError):
        native.loads(json.dumps({"format": "something-else", "version": 1}))
    lossless = Network([Node(1), Node(2)], [Edge("z", 1, 2, LossyPipe.lossless())], 1)
    with pytest.raises(InputError):
        native.to_document(lossless)


# ---------------------------------------------------------------------------
# INP reader

def test_inp_minimal():
    m = parse_inp(MINIMAL_INP)
    net = m.network
    assert net.reference == "R1" and net.n_nodes == 3 and net.n_edges == 2
    assert m.input.injections.tolist() == [-36.0, -72.0, 108.0]
    assert m.input.reference_pressure == 40.0
    # fully rough Darcy-Weisbach, computed independently
    fr = 0.25 / math.log10(0.1e-3 / (3.7 * 0.3)) ** 2
    c = 8 * fr * 1000 / (math.pi**2 * 9.81 * 0.3**5) / 3600**2
    assert net.edges[0].kind.c == pytest.approx(c, rel=1e-12) and net.edges[0].kind.rho == 2.0
    assert any("TITLE" in w for w in m.warnings)


def test_inp_hazen_williams():
    text = MINIMAL_INP.replace("HEADLOSS  D-W", "HEADLOSS  H-W").replace("0.1\n", "120\n")
    kept = parse_inp(text, keep_hazen_williams=True).network.edges[0].kind
    assert kept.rho == 1.852
    # 100 m^3/hr through 1000 m of 300 mm pipe, C = 120, with SI Hazen-Williams
    q = 100.0 / 3600.0
    drop = 10.67 * 1000 * q**1.852 / (120**1.852 * 0.3**4.87)
    assert kept.c * 100.0**1.852 == pytest.approx(drop, rel=1e-12)
    quad = parse_inp(text).network.edges[0].kind
    q1 = math.pi * 0.3**2 / 4 * 3600  # m^3/hr at 1 m/s
    assert quad.rho == 2.0 and quad.c * q1**2 == pytest.approx(kept.c * q1**1.852, rel=1e-12)
    assert hazen_c(1000, 0.3, 120, True)[0] == pytest.approx(kept.c)


def test_inp_us_units_and_pump():
    text = """
[JUNCTIONS]
 J1 0 100
[RESERVOIRS]
 R 0
[PIPES]
 P1 R J0 100 12 100
[JUNCTIONS]
 J0 0 0
[PUMPS]
 PU J0 J1 HEAD C1
[CURVES]
 C1 500 100
[OPTIONS]
 UNITS GPM
"""
    m = parse_inp(text, pump_flow_range=(0.0, 300.0))
    pump = m.network.edges[m.network.edge_index("PU")].kind
    q0, h0 = 500 * 0.2271247, 100 * 0.3048
    assert pump.nu_bar == pytest.approx(4 * h0 / 3) and pump.lam == pytest.approx(-h0 / (3 * q0 * q0))
    assert m.base_demands["J1"] == pytest.approx(100 * 0.2271247)


def test_inp_skipped_section_warning():
    m = parse_inp(MINIMAL_INP + "\n[COORDINATES]\n J1 1 2\n")
    assert any("[COORDINATES]" in w for w in m.warnings)


def test_inp_duplicate_node_reports_both_lines():
    text = MINIMAL_INP.replace(" J2  3     72", " J1  3     72")
    with pytest.raises(ParseError) as err:
        parse_inp(text)
    assert "lines 6 and 7" in str(err.value) and err.value.line == 7


def test_inp_unknown_node():
    with pytest.raises(ParseError) as err:
        parse_inp(MINIMAL_INP.replace("P2  J1  J2", "P2  J1  J9"))
    assert "J9" in str(err.value) and err.value.line == 13


def test_inp_bad_number():
    with pytest.raises(ParseError):
        parse_inp(MINIMAL_INP.replace("1000    300", "long    300"))


# ---------------------------------------------------------------------------
# generator

def test_generator_deterministic_and_balanced():
    net = hybrid23()
    cfg = InstanceGenConfig(pump_on_prob=0.5)
    a, ta = generate_feasible_instance(net, cfg, seed=5)
    b, tb = generate_feasible_instance(net, cfg, seed=5)
    assert np.array_equal(a.injections, b.injections) and a.pump_status == b.pump_status
    assert np.array_equal(ta.flows, tb.flows)
    for seed in range(20):
        inp, truth = generate_feasible_instance(net, cfg, seed=seed)
        assert abs(inp.injections.sum()) <= 1e-10 * max(1.0, np.max(np.abs(inp.injections)))
        assert truth.max_edge_residual <= 1e-9 and truth.residual_mass <= 1e-9
        assert truth.pressures[net.ref_index] == cfg.reference_pressure
        for p in net.pump_indices:
            if inp.pump_status[net.edges[p].id]:
                assert 250.0 <= truth.flows[p] <= 1500.0


def test_generator_rejects_lossless():
    net = Network([Node(1), Node(2)], [Edge("z", 1, 2, LossyPipe.lossless())], 1)
    with pytest.raises(InputError):
        generate_feasible_instance(net, seed=0)


def test_scaled_demands():
    _, base = net2_like()
    inp, a = scaled_demand_instance(base, seed=1)
    assert 0.0 <= a <= 1.5 and np.allclose(inp.injections, a * base.injections)


# ---------------------------------------------------------------------------
# Monte-Carlo harness

def test_success_counts():
    assert success_counts([2e-4, 5e-3]) == {"0.001": 1, "1e-05": 0, "1e-06": 0}
    assert success_counts([None, 0.0]) == {"0.001": 1, "1e-05": 1, "1e-06": 1}


def test_instance_seeds_are_stable():
    assert instance_seeds(0, 3) == instance_seeds(0, 5)[:3]
    assert len(set(instance_seeds(1, 50))) == 50


def _strip_times(report):
    rep = json.loads(json.dumps(report))
    for r in rep["instances"]:
        r["time"] = None
    for k in ("median_time", "mean_time"):
        rep["summary"][k] = None
    return rep


def test_report_reproducible(tmp_path):
    net = net10()
    cfg = BenchConfig(gen=InstanceGenConfig(seed=4, pump_on_prob=1.0), budget=30.0)
    a = run_montecarlo(net, 3, cfg)
    b = run_montecarlo(net, 3, BenchConfig(gen=cfg.gen, budget=30.0, workers=2))
    assert _strip_times(a) == _strip_times(b)
    s = a["summary"]
    assert s["instances"] == 3 and s["solved"] + s["budget_exceeded"] + s["infeasible"] + s["errors"] == 3
    assert a["ranked_gaps"] == sorted(a["ranked_gaps"], reverse=True)
    write_series(a, tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["rank", "max_gap", "index", "status", "time"] and len(rows) == 4


def test_scale_mode_needs_base():
    net, base = net2_like()
    rep = run_montecarlo(net, 2, BenchConfig(solver="stitch", mode="scale", base=base))
    assert rep["summary"]["solved"] == 2
    assert all(r["scale"] is not None for r in rep["instances"])
    with pytest.raises(ValueError):
        run_montecarlo(net, 1, BenchConfig(mode="scale"))


# ---------------------------------------------------------------------------
# command line

@pytest.fixture
def h23_file(tmp_path):
    net = hybrid23()
    inp, _ = generate_feasible_instance(net, InstanceGenConfig(pump_on_prob=1.0), seed=2)
    path = tmp_path / "h23.json"
    native.save(path, net, inp)
    return path


def test_cli_solve_and_classify(h23_file, tmp_path, capsys):
    out = tmp_path / "sol.json"
    assert cli.main(["solve", str(h23_file), "--out", str(out)]) == cli.EXIT_OK
    sol = json.loads(out.read_text())
    assert sol["status"] == "solved" and sol["solver"] == "hybrid" and len(sol["flows"]) == 28
    assert cli.main(["classify", str(h23_file)]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["solver"] == "hybrid"


def test_cli_inexact_exit_code(tmp_path):
    net, inp = disparate4()
    path = tmp_path / "d4.json"
    native.save(path, net, inp)
    assert cli.main(["solve", str(path), "--solver", "miqcqp", "--out", str(tmp_path / "o.json")]) == \
        cli.EXIT_INEXACT


def test_cli_budget_exit_code(h23_file):
    assert cli.main(["solve", str(h23_file), "--solver", "miqcqp", "--budget", "0"]) == cli.EXIT_BUDGET


def test_cli_infeasible_exit_code(h23_file, monkeypatch):
    def boom(*a, **k):
        raise InfeasibleError("no feasible direction pattern")

    monkeypatch.setattr(cli, "dispatch", boom)
    assert cli.main(["solve", str(h23_file)]) == cli.EXIT_INFEASIBLE


def test_cli_input_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert cli.main(["solve", str(bad)]) == cli.EXIT_INPUT
    assert cli.main(["solve", str(tmp_path / "missing.json")]) == cli.EXIT_INPUT
    net = Network([Node(1), Node(2), Node(3)], [Edge("p", 1, 2, BENCH_PUMP), pipe(2, 3), pipe(1, 3)], 1)
    path = tmp_path / "tri.json"
    native.save(path, net, WfInput([300.0, 0.0, -300.0]))
    assert cli.main(["solve", str(path), "--solver", "stitch"]) == cli.EXIT_INPUT


def test_cli_gen_bench_export_convert(h23_file, tmp_path):
    gen_dir = tmp_path / "gen"
    assert cli.main(["gen", str(h23_file), "-n", "2", "--seed", "7", "--out", str(gen_dir)]) == cli.EXIT_OK
    files = sorted(gen_dir.glob("*.json"))
    assert len(files) == 2
    _, _, meta = native.load(files[0])
    assert meta["seed"] == 7 and len(meta["truth"]["flows"]) == 28

    rep = tmp_path / "rep.json"
    series = tmp_path / "series.csv"
    assert cli.main(["bench", str(h23_file), "-n", "2", "--solver", "auto", "--out", str(rep),
                     "--series", str(series)]) == cli.EXIT_OK
    assert json.loads(rep.read_text())["summary"]["solved"] == 2 and series.exists()

    conic = tmp_path / "m.txt"
    assert cli.main(["export-conic", str(h23_file), "--out", str(conic)]) == cli.EXIT_OK
    assert conic.read_text().startswith("# wfsolve conic model v1") and "BIN x_" in conic.read_text()

    src = tmp_path / "net.inp"
    src.write_text(MINIMAL_INP)
    dst = tmp_path / "net.json"
    assert cli.main(["convert", str(src), str(dst)]) == cli.EXIT_OK
    net, inp, _ = native.load(dst)
    assert net.reference == "R1" and inp.injections.sum() == pytest.approx(0.0)
    assert cli.main(["solve", str(dst)]) == cli.EXIT_OK
