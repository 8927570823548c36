from __future__ import annotations

import json
from fractions import Fraction

import numpy as np
import pytest

from movrep.cli import bench_rows, main
from movrep.gen import KINDS, gen_instance
from movrep.io import (ParseError, format_instance, format_number, parse_instance, parse_instance_text,
                       parse_result_text)
from movrep.model import validate_metric

ONE_CLIENT = """MRINST 1
mode metric
nodes 2
dist 0 1
dist 1 0
repairman 0 0 1
client 0 1 0
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_format_number():
    assert format_number(Fraction(5, 2)) == "2.5"
    assert format_number(Fraction(1, 3)) == "1/3"
    assert format_number(Fraction(7)) == "7"
    assert format_number(Fraction(-1, 8)) == "-0.125"


def test_minimal_file():
    f = parse_instance_text("MRINST 1\nmode metric\nnodes 1\ndist 0\nrepairman 0 0 1\n")
    inst = f.instance()
    assert inst.n == 1 and inst.m == 0 and f.npcst_root is None


def test_asymmetric_matrix_names_pair():
    text = ONE_CLIENT.replace("dist 1 0", "dist 2 0")
    with pytest.raises(ParseError, match=r"asymmetry at \(0, 1\)"):
        parse_instance_text(text)


@pytest.mark.parametrize("bad, field", [("dist 0 x", "dist[0][1]"), ("client 0 5 0", "start"),
                                        ("speed", "keyword")])
def test_positioned_errors(bad, field):
    lines = ONE_CLIENT.splitlines()
    if bad.startswith("dist"):
        lines[3] = bad
    elif bad.startswith("client"):
        lines[6] = bad
    else:
        lines.append(bad)
    with pytest.raises(ParseError) as e:
        parse_instance_text("\n".join(lines))
    assert e.value.field == field and e.value.line is not None


def test_missing_file():
    with pytest.raises(ParseError, match="no such file"):
        parse_instance("/nonexistent/instance.txt")


def test_round_trip_random_instances():
    rng = np.random.default_rng(0)
    for i in range(100):
        kind = KINDS[i % 3]
        f = gen_instance(kind, int(rng.integers(1, 9)), int(rng.integers(1, 3)), int(rng.integers(0, 5)),
                         int(rng.integers(10**6)), equal_speeds=bool(i % 2))
        text = format_instance(f)
        g = parse_instance_text(text)
        assert format_instance(g) == text
        assert g.metric.dist == f.metric.dist and g.repairmen == f.repairmen and g.clients == f.clients
        assert (g.npcst_root, g.npcst_budget, g.npcst_clients) == (f.npcst_root, f.npcst_budget, f.npcst_clients)


def test_generator_properties():
    for kind in KINDS:
        a = format_instance(gen_instance(kind, 7, 2, 4, seed=3))
        assert a == format_instance(gen_instance(kind, 7, 2, 4, seed=3))
        f = parse_instance_text(a)
        assert validate_metric(f.metric.dist) == [] or f.mode == "euclidean"
        assert validate_metric(f.metric.array.tolist(), tol=1e-9) == []
    assert "\nnode 0 " in format_instance(gen_instance("euclidean", 4, 1, 1, 0))
    with pytest.raises(ValueError):
        gen_instance("grid", 3)


def test_solve_sum_then_verify(tmp_path, capsys):
    inst = tmp_path / "one.txt"
    inst.write_text(ONE_CLIENT)
    res = tmp_path / "one.res"
    assert run(capsys, "solve-sum", "--instance", str(inst), "--out", str(res))[0] == 0
    rec = parse_result_text(res.read_text())
    assert rec["objective"] >= 1 and rec["command"] == "solve-sum"
    code, out, _ = run(capsys, "verify", "--instance", str(inst), "--result", str(res))
    assert code == 0 and json.loads(out)["verified"]


def test_tampered_result_fails(tmp_path, capsys):
    inst = tmp_path / "one.txt"
    inst.write_text(ONE_CLIENT)
    res = tmp_path / "one.res"
    run(capsys, "solve-sum", "--instance", str(inst), "--out", str(res))
    rec = parse_result_text(res.read_text())
    rec["latencies"][0] = rec["latencies"][0] / 2
    res.write_text("MRRESULT 1\n" + json.dumps(rec))
    code, _, err = run(capsys, "verify", "--instance", str(inst), "--result", str(res))
    assert code == 3 and json.loads(err)["error"] == "verify"
    inst.write_text(ONE_CLIENT + "# edited\n")
    res.write_text("MRRESULT 1\n" + json.dumps(parse_result_text(res.read_text())))
    assert run(capsys, "verify", "--instance", str(inst), "--result", str(res))[0] == 3


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("MRINST 2\n")
    code, _, err = run(capsys, "solve-max", "--instance", str(bad))
    assert code == 2 and json.loads(err)["line"] == 1


def test_unequal_speeds_exit_code(tmp_path, capsys):
    p = tmp_path / "i.txt"
    p.write_text(ONE_CLIENT + "repairman 1 1 2\n")
    code, _, err = run(capsys, "solve-max", "--instance", str(p))
    assert code == 1 and "one speed" in json.loads(err)["message"]


def test_bench_ten_rows():
    rows = bench_rows(10, 0)
    assert len(rows) == 10 and [r["seed"] for r in rows] == list(range(10))
    assert all(r["sum_ratio"] >= 1 - 1e-9 and r["max_ratio"] >= 1 - 1e-9 for r in rows)


COMMANDS = [
    ("solve-sum", []), ("solve-sum", ["--mode", "oracle", "--frt-count", "3"]), ("solve-max", []),
    ("npcst", ["--frt-count", "4"]), ("embed", ["--frt-count", "3"]), ("oracle", ["--objective", "sum"]),
    ("oracle", ["--objective", "max"]), ("oracle", ["--objective", "npcst"]),
]


@pytest.mark.parametrize("kind", ["random-metric", "euclidean"])
def test_every_command_deterministic_and_verified(tmp_path, capsys, kind):
    inst = tmp_path / "i.txt"
    assert run(capsys, "gen", "--kind", kind, "--nodes", "5", "--clients", "3", "--seed", "7",
               "--out", str(inst))[0] == 0
    cmds = COMMANDS + ([("npcst-euclid", [])] if kind == "euclidean" else [])
    for name, extra in cmds:
        outs = []
        for rep in range(2):
            res = tmp_path / f"{name}-{rep}.res"
            code, _, err = run(capsys, name, "--instance", str(inst), "--seed", "1", "--out", str(res), *extra)
            assert code == 0, err
            outs.append(res.read_bytes())
        assert outs[0] == outs[1], name
        code, _, err = run(capsys, "verify", "--instance", str(inst), "--result", str(res))
        assert code == 0, (name, err)


def test_npcst_euclid_needs_coordinates(tmp_path, capsys):
    inst = tmp_path / "i.txt"
    run(capsys, "gen", "--kind", "random-metric", "--out", str(inst))
    assert run(capsys, "npcst-euclid", "--instance", str(inst))[0] == 1
