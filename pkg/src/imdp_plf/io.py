"""Model files, trace CSVs and small JSON helpers.

Model files are JSON objects with exactly these keys::

    states, actions, p_lower, p_upper, r_lower, r_upper, discounts, initial_state

``p_lower``/``p_upper`` map ``"state/action"`` to ``{next_state: value}``
(omitted entries are 0); ``r_lower``/``r_upper`` hold one such
``"state/action" -> value`` object per objective. Values are numbers or
exact rational strings such as ``"1/3"``.
"""
from __future__ import annotations

import csv
import json
from fractions import Fraction

import numpy as np

from .errors import ParseError
from .model import MoimdpModel, make_model, validate_model

MODEL_KEYS = ("states", "actions", "p_lower", "p_upper", "r_lower", "r_upper", "discounts",
              "initial_state")


def _num(v, where) -> float:
    if isinstance(v, bool):
        raise ParseError(f"ParseError: {where}: boolean is not a number")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"ParseError: {where}: cannot parse {v!r} as a number") from exc
    raise ParseError(f"ParseError: {where}: expected a number, got {type(v).__name__}")


def _need(cond, msg):
    if not cond:
        raise ParseError(f"ParseError: {msg}")


def model_from_dict(data, validate: bool = True) -> MoimdpModel:
    _need(isinstance(data, dict), "top level must be an object")
    unknown = sorted(set(data) - set(MODEL_KEYS))
    _need(not unknown, f"unknown key(s) {unknown}")
    missing = [k for k in MODEL_KEYS if k not in data]
    _need(not missing, f"missing key(s) {missing}")
    states = data["states"]
    _need(isinstance(states, list) and states and all(isinstance(s, str) for s in states),
          "key 'states' must be a nonempty array of strings")
    _need(len(set(states)) == len(states), "key 'states' has duplicates")
    sidx = {s: i for i, s in enumerate(states)}
    acts = data["actions"]
    _need(isinstance(acts, dict), "key 'actions' must be an object")
    _need(set(acts) == set(states), "key 'actions' must list every state exactly once")
    actions = []
    for s in states:
        a = acts[s]
        _need(isinstance(a, list) and a and all(isinstance(x, str) for x in a),
              f"actions[{s!r}] must be a nonempty array of strings")
        _need(len(set(a)) == len(a), f"actions[{s!r}] has duplicates")
        actions.append(a)
    n = len(states)
    amax = max(len(a) for a in actions)
    pairs = {f"{s}/{u}": (x, k) for x, s in enumerate(states) for k, u in enumerate(actions[x])}

    def pair(key, where):
        _need(key in pairs, f"{where}: unknown state/action {key!r}")
        return pairs[key]

    P = {}
    for name in ("p_lower", "p_upper"):
        arr = np.zeros((n, amax, n))
        obj = data[name]
        _need(isinstance(obj, dict), f"key {name!r} must be an object")
        for key, row in obj.items():
            x, u = pair(key, name)
            _need(isinstance(row, dict), f"{name}[{key!r}] must be an object")
            for nxt, v in row.items():
                _need(nxt in sidx, f"{name}[{key!r}]: unknown next state {nxt!r}")
                arr[x, u, sidx[nxt]] = _num(v, f"{name}[{key!r}][{nxt!r}]")
        P[name] = arr
    gam = data["discounts"]
    _need(isinstance(gam, list) and gam, "key 'discounts' must be a nonempty array")
    discounts = [_num(g, f"discounts[{i}]") for i, g in enumerate(gam)]
    q = len(discounts)
    R = {}
    for name in ("r_lower", "r_upper"):
        arr = np.zeros((q, n, amax))
        obj = data[name]
        _need(isinstance(obj, list) and len(obj) == q,
              f"key {name!r} must be an array with one object per objective ({q})")
        for m, per in enumerate(obj):
            _need(isinstance(per, dict), f"{name}[{m}] must be an object")
            for key, v in per.items():
                x, u = pair(key, f"{name}[{m}]")
                arr[m, x, u] = _num(v, f"{name}[{m}][{key!r}]")
        R[name] = arr
    init = data["initial_state"]
    _need(init in sidx, f"initial_state {init!r} is not a state")
    model = make_model(states, actions, P["p_lower"], P["p_upper"], R["r_lower"], R["r_upper"],
                       discounts, sidx[init])
    return validate_model(model) if validate else model


def model_to_dict(model: MoimdpModel) -> dict:
    out = {"states": list(model.states),
           "actions": {s: list(model.actions[x]) for x, s in enumerate(model.states)}}
    for name in ("p_lower", "p_upper"):
        arr = getattr(model, name)
        out[name] = {
            f"{model.states[x]}/{model.actions[x][u]}": {
                model.states[y]: float(arr[x, u, y]) for y in range(model.n) if arr[x, u, y] != 0
            }
            for x, u in model.pairs()
        }
    for name in ("r_lower", "r_upper"):
        arr = getattr(model, name)
        out[name] = [
            {f"{model.states[x]}/{model.actions[x][u]}": float(arr[m, x, u]) for x, u in model.pairs()}
            for m in range(model.q)
        ]
    out["discounts"] = [float(g) for g in model.discounts]
    out["initial_state"] = model.states[model.initial_state]
    return out


def load_model(path, validate: bool = True) -> MoimdpModel:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"ParseError: cannot read {path}: {exc}") from exc
    if not text.strip():
        raise ParseError(f"ParseError: {path} is empty")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"ParseError: {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return model_from_dict(data, validate)


def save_model(model: MoimdpModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


def load_vector(spec, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Vector from a JSON file path, a JSON array string, or comma-separated numbers."""
    if isinstance(spec, (list, tuple, np.ndarray)):
        vals = [_num(v, name) for v in spec]
    else:
        text = str(spec).strip()
        if text.startswith("["):
            vals = [_num(v, name) for v in json.loads(text)]
        elif text.endswith(".json"):
            with open(text) as fh:
                vals = [_num(v, name) for v in json.load(fh)]
        else:
            vals = [_num(v, name) for v in text.split(",") if v.strip()]
    out = np.array(vals, dtype=float)
    if dim is not None and out.shape != (dim,):
        raise ParseError(f"ParseError: {name} needs {dim} entries, got {out.shape[0]}")
    return out


TRACE_FMT = "%.17g"


def write_trace(path, W, pi, V):
    """CSV with columns ``k, W0..W{d-1}, pi, V``; policies are written 1-based."""
    W = np.asarray(W, dtype=float)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k"] + [f"W{i}" for i in range(W.shape[1])] + ["pi", "V"])
        for k in range(W.shape[0]):
            p = "" if pi[k] is None or pi[k] < 0 else str(int(pi[k]) + 1)
            wr.writerow([str(k)] + [TRACE_FMT % v for v in W[k]] + [p, TRACE_FMT % V[k]])


def read_trace(path):
    """Inverse of :func:`write_trace`; policies come back 0-based (-1 if blank)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    W = np.array([[float(v) for v in r[1:-2]] for r in body])
    pi = np.array([int(r[-2]) - 1 if r[-2] else -1 for r in body])
    V = np.array([float(r[-1]) for r in body])
    return W, pi, V


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Fraction):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
