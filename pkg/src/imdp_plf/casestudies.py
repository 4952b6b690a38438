"""Bundled case studies: the recycling robot, a three-state IMDP and an EV
battery end-of-life model whose reward numbers are placeholders.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .cegis_common import CegisConfig
from .errors import ModelError
from .io import load_model
from .model import MoimdpModel, make_model, validate_model
from .robust_vi import RunConfig

NAMES = ("recycling-robot", "imdp3", "ev-battery")


@dataclass
class CaseStudyBundle:
    name: str
    model: MoimdpModel
    lam: list | None
    w0: np.ndarray
    engine: str
    vertex_mode: str = "corners"
    budget: int = 8
    box: list | None = None
    cegis: dict = field(default_factory=dict)
    w_tar: np.ndarray | None = None

    @property
    def gammas(self):
        return self.model.discounts

    def config(self, engine: str | None = None, **kw) -> RunConfig:
        engine = engine or self.engine
        cegis = CegisConfig(**self.cegis.get(engine, {}))
        return RunConfig(engine=engine, lam=self.lam, vertex_mode=self.vertex_mode,
                         budget=self.budget, box=self.box, cegis=cegis, **kw)


def _data(name):
    return resources.files("imdp_plf").joinpath("data", name)


def load_bundle(name: str, params=None, q: int | None = None) -> CaseStudyBundle:
    if name != "ev-battery" and (params is not None or q is not None):
        raise ValueError(f"parameters and objective counts only apply to ev-battery, not {name!r}")
    if name == "recycling-robot":
        model = load_model(_data("recycling-robot.json"))
        # pure policy 3: wait when low, search when high
        lam = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        return CaseStudyBundle(name, model, lam, np.zeros(model.dim), "smt",
                               cegis={"smt": {}, "milp": {}})
    if name == "imdp3":
        model = load_model(_data("imdp3.json"))
        return CaseStudyBundle(name, model, [0.9, 0.1], np.zeros(model.dim), "milp",
                               cegis={"milp": {"synth_eps": 1e-5}, "smt": {}})
    if name == "ev-battery":
        p = ev_params(params)
        model = ev_battery_model(p, q if q is not None else p["objectives"])
        lam = np.zeros(16)
        lam[p["policy"] - 1] = 1.0
        return CaseStudyBundle(name, model, lam.tolist(), np.zeros(model.dim), "milp",
                               vertex_mode="budgeted", budget=2,
                               cegis={"milp": {"initial_facets": "box", "rho_floor": "box"},
                                      "smt": {}})
    raise ValueError(f"unknown case study {name!r}; choose from {', '.join(NAMES)}")


# EV battery ---------------------------------------------------------------

EV_STATES = ("S0", "SI", "SR", "SM", "SC", "SD")
EV_ACTIONS = (("inspect", "reuse", "remanufacture", "recycle"),
              ("reuse", "remanufacture", "recycle", "dispose"),
              ("continue",), ("continue",), ("continue",), ("continue",))
EV_ROUTE = {"inspect": "SI", "reuse": "SR", "remanufacture": "SM", "recycle": "SC",
            "dispose": "SD"}

# placeholder numbers; every entry can be overridden by a parameters file
EV_DEFAULTS = {
    "discount": 0.8,
    "objectives": 1,
    "policy": 1,
    "variation": 0.03,
    "reward_rel": [0.0001, 0.0003],
    # probability of reaching the routed state; the rest stays put
    "success": {"S0": 0.8, "SI": 0.9},
    # non-decision states return to service with these probabilities
    "return": {"SR": 0.7, "SM": 0.8, "SC": 0.6, "SD": 0.5},
    "cost": {"inspect": -0.2, "reuse": -0.3, "remanufacture": -0.6, "recycle": -0.5,
             "dispose": -0.4, "continue": 0.0},
    "health": {"inspect": -0.5, "reuse": -0.4, "remanufacture": -0.15, "recycle": -0.1,
               "dispose": -0.1, "continue": -0.05},
    "health_state": {"S0": 1.0, "SI": 1.1, "SR": 6.0, "SM": 1.0, "SC": 1.0, "SD": 1.0},
    "benefit": {"inspect": 0.0, "reuse": 1.0, "remanufacture": 0.6, "recycle": 0.3,
                "dispose": -0.5, "continue": 0.0},
}


def ev_params(params=None) -> dict:
    """Defaults merged with ``params`` (a dict or a JSON file path), then checked."""
    p = copy.deepcopy(EV_DEFAULTS)
    if isinstance(params, str):
        with open(params) as fh:
            params = json.load(fh)
    for key, val in (params or {}).items():
        if key not in p:
            raise ModelError(f"ParseError: unknown EV parameter {key!r}")
        if isinstance(p[key], dict):
            p[key].update(val)
        else:
            p[key] = val
    check_ev_params(p)
    return p


def check_ev_params(p: dict):
    b, c = p["benefit"], p["cost"]
    if not b["reuse"] > b["remanufacture"] > b["recycle"]:
        raise ModelError("EV parameters: benefit must satisfy reuse > remanufacture > recycle")
    if not b["dispose"] < 0:
        raise ModelError("EV parameters: disposal benefit must be negative")
    if any(c[a] > 0 for a in EV_ROUTE):
        raise ModelError("EV parameters: economic costs are nonpositive rewards")
    if not c["remanufacture"] < c["reuse"]:
        raise ModelError("EV parameters: remanufacturing must cost more than reusing")
    if not 0 <= p["variation"] < 1:
        raise ModelError("EV parameters: variation must lie in [0, 1)")
    if p["objectives"] not in (1, 2, 3):
        raise ModelError("EV parameters: objectives must be 1, 2 or 3")
    if not 1 <= p["policy"] <= 16:
        raise ModelError("EV parameters: policy index must lie in 1..16")


def ev_battery_model(p: dict, q: int = 1) -> MoimdpModel:
    if q not in (1, 2, 3):
        raise ModelError("EV battery model supports 1, 2 or 3 objectives")
    n = len(EV_STATES)
    sidx = {s: i for i, s in enumerate(EV_STATES)}
    amax = max(len(a) for a in EV_ACTIONS)
    P = np.zeros((n, amax, n))
    for x, s in enumerate(EV_STATES):
        for u, a in enumerate(EV_ACTIONS[x]):
            if a == "continue":
                ret = p["return"][s]
                P[x, u, sidx["S0"]] += ret
                P[x, u, x] += 1.0 - ret
            else:
                ok = p["success"][s]
                P[x, u, sidx[EV_ROUTE[a]]] += ok
                P[x, u, x] += 1.0 - ok
    var = p["variation"]
    p_lo = np.clip(P * (1.0 - var), 0.0, 1.0)
    p_hi = np.clip(P * (1.0 + var), 0.0, 1.0)
    kinds = ("cost", "health", "benefit")[:q]
    R = np.zeros((q, n, amax))
    rel = np.zeros((n, amax))
    lo_rel, hi_rel = p["reward_rel"]
    for x, s in enumerate(EV_STATES):
        for u, a in enumerate(EV_ACTIONS[x]):
            for m, kind in enumerate(kinds):
                val = p[kind][a]
                if kind == "health":
                    val *= p["health_state"][s]
                R[m, x, u] = val
            # spread the relative widths over the actions
            rel[x, u] = lo_rel + (hi_rel - lo_rel) * u / max(amax - 1, 1)
    half = np.abs(R) * rel
    model = make_model(EV_STATES, EV_ACTIONS, p_lo, p_hi, R - half, R + half,
                       [p["discount"]] * q, 0)
    return validate_model(model)
