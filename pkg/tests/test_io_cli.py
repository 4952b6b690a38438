import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_model
from imdp_plf import cli
from imdp_plf.casestudies import _data
from imdp_plf.cegis_common import CegisResult
from imdp_plf.errors import Infeasible, ParseError
from imdp_plf.io import (load_model, load_vector, model_from_dict, model_to_dict, read_trace,
                         save_model, write_trace)
from imdp_plf.plf import Plf

ROBOT = str(_data("recycling-robot.json"))


def robot_dict():
    with open(ROBOT) as fh:
        return json.load(fh)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_model_roundtrip(seed):
    model = random_model(np.random.default_rng(seed))
    back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
    assert back.states == model.states and back.actions == model.actions
    for name in ("p_lower", "p_upper", "r_lower", "r_upper", "discounts"):
        np.testing.assert_array_equal(getattr(back, name), getattr(model, name))


def test_save_load(tmp_path):
    m = load_model(ROBOT)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(back.p_lower, m.p_lower)
    # rational strings are read exactly
    assert m.p_lower[1, 0, 0] == 0.3


@pytest.mark.parametrize("edit", [
    lambda d: d.update(extra=1),
    lambda d: d.pop("discounts"),
    lambda d: d["p_lower"].update({"low/fly": {"low": 1}}),
    lambda d: d["p_lower"]["low/wait"].update(low="one"),
    lambda d: d["p_lower"]["low/wait"].update(low=True),
    lambda d: d["p_lower"]["low/wait"].update(nowhere=0.5),
    lambda d: d.update(initial_state="mid"),
    lambda d: d.update(r_lower=[]),
    lambda d: d["actions"].update(low=[]),
])
def test_parse_errors(edit):
    d = robot_dict()
    edit(d)
    with pytest.raises(ParseError):
        model_from_dict(d)


def test_unreadable_files(tmp_path):
    (tmp_path / "empty.json").write_text("  ")
    (tmp_path / "bad.json").write_text("{\"states\": [")
    for name in ("empty.json", "bad.json", "missing.json"):
        with pytest.raises(ParseError):
            load_model(tmp_path / name)


def test_load_vector(tmp_path):
    np.testing.assert_array_equal(load_vector("[1, \"1/2\"]"), [1.0, 0.5])
    np.testing.assert_array_equal(load_vector("3, 4,5", 3), [3.0, 4.0, 5.0])
    (tmp_path / "v.json").write_text("[0.25, 2]")
    np.testing.assert_array_equal(load_vector(str(tmp_path / "v.json")), [0.25, 2.0])
    with pytest.raises(ParseError):
        load_vector("1,2", 3)


def test_trace_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    W, V = rng.normal(size=(5, 3)), rng.random(5)
    pi = np.array([0, 2, 2, 1, -1])
    write_trace(tmp_path / "t.csv", W, pi, V)
    W2, pi2, V2 = read_trace(tmp_path / "t.csv")
    np.testing.assert_array_equal(W2, W)
    np.testing.assert_array_equal(pi2, pi)
    np.testing.assert_array_equal(V2, V)
    head = (tmp_path / "t.csv").read_text().splitlines()[:2]
    assert head[0] == "k,W0,W1,W2,pi,V" and head[1].split(",")[4] == "1"


def test_cli_validate(tmp_path, capsys):
    assert cli.main(["validate", ROBOT]) == 0
    assert "2 states, 6 stationary policies" in capsys.readouterr().out
    d = robot_dict()
    d["r_lower"][0]["low/wait"] = 5
    (tmp_path / "bad.json").write_text(json.dumps(d))
    assert cli.main(["validate", str(tmp_path / "bad.json")]) == 1
    assert "IntervalOrder" in capsys.readouterr().err


def test_cli_casestudy_files(tmp_path):
    out = tmp_path / "robot"
    assert cli.main(["casestudy", "recycling-robot", "--out", str(out)]) == 0
    names = set(os.listdir(out))
    assert {"trace_lower.csv", "trace_upper.csv", "plf.json", "g_set.json", "report.json",
            "cegis_state.json"} <= names
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "success" and rep["policy"]["upper"]["final"] == 3
    g = json.loads((out / "g_set.json").read_text())
    assert np.isfinite(g["diameter_inf"])


def test_cli_synthesize_then_run_vi(tmp_path, capsys):
    syn = tmp_path / "syn"
    args = ["synthesize", "--model", ROBOT, "--lambda", "[0,0,1,0,0,0]", "--out", str(syn),
            "--dump-smt", str(tmp_path / "smt")]
    assert cli.main(args) == 0
    assert "success" in capsys.readouterr().out
    summary = json.loads((syn / "synthesis.json").read_text())
    np.testing.assert_allclose(summary["w_tar_prime"], [4.0, 172 / 13])
    assert any(n.endswith(".smt2") for n in os.listdir(tmp_path / "smt"))
    vi = tmp_path / "vi"
    args = ["run-vi", "--model", ROBOT, "--plf", str(syn / "plf.json"), "--lambda",
            "[0,0,1,0,0,0]", "--opt", "max", "--out", str(vi)]
    assert cli.main(args) == 0
    W, pi, V = read_trace(vi / "trace_upper.csv")
    np.testing.assert_allclose(W[-1], [4.0, 172 / 13], atol=1e-6)
    assert not (vi / "trace_lower.csv").exists()
    assert Plf.load(syn / "plf.json").mode == "smt"


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    # a single CEGIS iteration cannot certify the robot
    out = tmp_path / "cap"
    assert cli.main(["casestudy", "recycling-robot", "--max-cegis", "1", "--out", str(out)]) == 3
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "cap-exhausted"
    assert cli.main(["synthesize", "--model", ROBOT, "--lambda", "[0,0,1,0,0,0]",
                     "--max-cegis", "1", "--out", str(tmp_path / "s")]) == 3

    def infeasible(*a, **k):
        err = Infeasible("Infeasible: no certificate")
        err.result = CegisResult(status="fail", message="no certificate")
        raise err

    monkeypatch.setattr(cli, "run_pipeline", infeasible)
    out = tmp_path / "fail"
    assert cli.main(["casestudy", "imdp3", "--out", str(out)]) == 2
    assert json.loads((out / "report.json").read_text())["status"] == "fail"
    assert cli.main(["casestudy", "imdp3", "--params", "p.json", "--out", str(out)]) == 1
    assert cli.main(["synthesize", "--model", str(tmp_path / "none.json"), "--out",
                     str(out)]) == 1
    capsys.readouterr()


def test_cli_report(tmp_path, capsys):
    runs = []
    for i, (eng, status) in enumerate((("smt", "success"), ("milp", "success"),
                                       ("smt", "fail"))):
        rep = {"n": 2, "q": 1, "engine": eng, "status": status, "target": f"W{1 + i // 2}",
               "policy": {"lower": {"final": 3}}, "E_lower": 1e-9, "E_upper": 2e-9,
               "T_synth": 1.5, "T_vi": 0.01}
        p = tmp_path / f"r{i}.json"
        p.write_text(json.dumps(rep))
        runs.append(str(p))
    assert cli.main(["report", "--runs", *runs]) == 0
    md = capsys.readouterr().out.splitlines()
    assert md[0].startswith("| n | q | W_tar | SMT-PLF pi") and len(md) == 4
    assert "| 2 | 1 | W1 | 3 |" in md[2] and md[3].count("--") == 10
    out = tmp_path / "t.csv"
    assert cli.main(["report", "--runs", *runs, "--format", "csv", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 3 and rows[1].split(",")[3:5] == ["3", "0.0000"]
