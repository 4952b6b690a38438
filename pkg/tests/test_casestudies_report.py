import json

import numpy as np
import pytest

from imdp_plf.casestudies import EV_STATES, ev_params, load_bundle
from imdp_plf.errors import ModelError
from imdp_plf.model import build_nominal, enumerate_policies
from imdp_plf.report import ReportRow, collect_rows, emit_report, table


def test_ev_structure():
    for q in (1, 2, 3):
        b = load_bundle("ev-battery", q=q)
        m = b.model
        assert m.n == 6 and m.q == q and m.states == EV_STATES
        assert len(enumerate_policies(m)) == 16
        assert sum(b.lam) == 1.0
    nom = build_nominal(load_bundle("ev-battery").model)
    # nominal rows stay stochastic
    np.testing.assert_allclose(nom.i_hat.sum(axis=2), 1.0)


@pytest.mark.parametrize("bad", [
    {"benefit": {"reuse": 0.1}},
    {"benefit": {"dispose": 0.2}},
    {"cost": {"recycle": 0.1}},
    {"cost": {"remanufacture": -0.1}},
    {"variation": 1.5},
    {"objectives": 4},
    {"policy": 17},
    {"colour": "red"},
])
def test_ev_param_checks(bad):
    with pytest.raises(ModelError):
        ev_params(bad)


def test_ev_params_file(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"policy": 7, "benefit": {"reuse": 2.0}}))
    p = ev_params(str(f))
    assert p["policy"] == 7 and p["benefit"]["reuse"] == 2.0 and p["benefit"]["recycle"] == 0.3
    b = load_bundle("ev-battery", str(f))
    assert b.lam[6] == 1.0


def test_bundle_configs(robot, imdp3):
    assert robot.config().engine == "smt" and imdp3.config().engine == "milp"
    assert load_bundle("ev-battery").config().vertex_mode == "budgeted"
    with pytest.raises(ValueError):
        load_bundle("ferry")
    with pytest.raises(ValueError):
        load_bundle("imdp3", q=2)


def row(engine, target="W1", status="success", pi=3):
    return ReportRow(2, 1, target, engine, pi, 1e-9, 2e-9, 1.234, 0.0123, status)


def test_table_groups_engines():
    header, body = table([row("smt"), row("milp"), row("milp", "W2")])
    assert header[:3] == ["n", "q", "W_tar"] and len(header) == 13
    assert header[3] == "SMT-PLF pi" and header[8] == "Opt-PLF pi"
    assert len(body) == 2
    assert body[0][3:8] == ["3", "0.0000", "0.0000", "1.23", "0.01"]
    assert body[1][3:8] == ["--"] * 5 and body[1][8] == "3"


def test_failed_rows_are_dashes():
    _, body = table([row("smt", status="fail"), row("milp", status="cap-exhausted")])
    assert body[0][3:] == ["--"] * 10
    with pytest.raises(ValueError):
        table([])
    with pytest.raises(ValueError):
        emit_report([row("smt")], "html")


def test_rows_from_reports(tmp_path):
    rep = {"n": 6, "q": 2, "engine": "milp", "status": "success",
           "policy": {"upper": {"final": 1}}, "E_lower": None, "E_upper": 0.5,
           "T_synth": 3.0, "T_vi": 0.5}
    d = tmp_path / "run"
    d.mkdir()
    (d / "report.json").write_text(json.dumps(rep))
    r, = collect_rows([str(d)])
    assert r.target == "W1" and r.pi == 1 and r.e_lower is None and r.ok
    text = emit_report([r])
    assert "| 6 | 2 | W1 | -- | -- | -- | -- | -- | 1 | -- | 0.5000 | 3.00 | 0.50 |" in text
