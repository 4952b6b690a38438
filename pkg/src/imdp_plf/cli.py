"""Command-line entry point ``imdp-plf``.

Exit codes: 0 success, 1 model or input error, 2 synthesis infeasible,
3 iteration cap or solver timeout.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .casestudies import NAMES, load_bundle
from .cegis_common import CegisConfig
from .errors import DidNotEnterIsoa, Infeasible, ModelError, SolverTimeout
from .io import dump_json, load_model, load_vector
from .model import enumerate_policies
from .plf import Plf
from .report import collect_rows, emit_report
from .robust_vi import RunConfig, _resolution, prepare, run_pipeline, synthesize_certificate

EXIT_OK, EXIT_INPUT, EXIT_FAIL, EXIT_CAP = 0, 1, 2, 3


def _add_run_args(p, engine_default=None):
    p.add_argument("--engine", choices=("smt", "milp"), default=engine_default)
    p.add_argument("--lambda", dest="lam", help="mixture weights (JSON array, CSV or .json file)")
    p.add_argument("--box", help="error-box radius (scalar) or radii per coordinate")
    p.add_argument("--w0", help="initial values W_0 (default zeros)")
    p.add_argument("--vertex-mode", choices=("corners", "budgeted"), default=None)
    p.add_argument("--budget", type=int, default=None, help="vertices per policy (budgeted)")
    p.add_argument("--max-cegis", type=int, default=None, help="CEGIS iteration cap")
    p.add_argument("--timeout", type=float, default=None, help="seconds per solver call")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-smt", metavar="DIR", help="write SMT-LIB2 queries to DIR")
    p.add_argument("--dump-lp", metavar="DIR", help="write LP-format MILPs to DIR")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imdp-plf", description=(
        "Policy synthesis for interval MDPs with polyhedral Lyapunov certificates."))
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="parse and validate a model file")
    p.add_argument("model")

    p = sub.add_parser("synthesize", help="synthesize a certificate for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--target", help="target values W_tar")
    _add_run_args(p, "smt")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run-vi", help="robust value iteration with a given certificate")
    p.add_argument("--model", required=True)
    p.add_argument("--target")
    p.add_argument("--plf", required=True)
    p.add_argument("--opt", choices=("min", "max", "both"), default="both")
    _add_run_args(p, "smt")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("casestudy", help="run a bundled case study end to end")
    p.add_argument("name", choices=NAMES)
    p.add_argument("--target")
    p.add_argument("--target-id", default="W1", help="label used in reports")
    p.add_argument("--params", help="EV battery parameters file (JSON)")
    p.add_argument("--q", type=int, default=None, help="EV battery objectives (1, 2 or 3)")
    p.add_argument("--opt", choices=("min", "max", "both"), default="both")
    _add_run_args(p)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="aggregate report.json files into a table")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.add_argument("--out")
    return ap


def _cegis(args, base: CegisConfig | None = None) -> CegisConfig:
    cfg = base or CegisConfig()
    if args.max_cegis is not None:
        cfg.max_iter = args.max_cegis
    if args.timeout is not None:
        cfg.timeout = args.timeout
    cfg.seed = args.seed
    dump = args.dump_smt or args.dump_lp
    if dump:
        cfg.dump_dir = dump
    return cfg


def _run_config(args, model, base: RunConfig | None = None, **kw) -> RunConfig:
    cfg = base or RunConfig()
    if args.engine:
        cfg.engine = args.engine
    if args.lam:
        cfg.lam = load_vector(args.lam, len(enumerate_policies(model)), "lambda").tolist()
    if args.box is not None:
        cfg.box = load_vector(args.box, None, "box").tolist()
    if args.vertex_mode:
        cfg.vertex_mode = args.vertex_mode
    if args.budget is not None:
        cfg.budget = args.budget
    cfg.seed = args.seed
    cfg.cegis = _cegis(args, cfg.cegis)
    for k, v in kw.items():
        setattr(cfg, k, v)
    cfg.__post_init__()
    args.run_info = {"n": model.n, "q": model.q, "engine": cfg.engine}
    return cfg


def _target(args, model):
    return None if not args.target else load_vector(args.target, model.dim, "target")


def _w0(args, model):
    return None if not args.w0 else load_vector(args.w0, model.dim, "w0")


def cmd_validate(args) -> int:
    model = load_model(args.model)
    pols = enumerate_policies(model)
    print(f"ok: {model.n} states, {len(pols)} stationary policies, {model.q} objective(s), "
          f"discounts {[float(g) for g in model.discounts]}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    model = load_model(args.model)
    cfg = _run_config(args, model)
    _, w_tar, w_prime, lam, dist, vs, box = prepare(model, _target(args, model), cfg)
    w0 = _w0(args, model)
    e0 = (np.zeros(model.dim) if w0 is None else w0) - w_prime
    res, vs, rounds, oracle = synthesize_certificate(vs, box, e0, cfg)
    os.makedirs(args.out, exist_ok=True)
    dump_json(res.state_json(), os.path.join(args.out, "cegis_state.json"))
    summary = {"status": res.status, "message": res.message, "iterations": res.iterations,
               "elapsed_s": res.elapsed, "w_tar": w_tar, "w_tar_prime": w_prime, "lambda": lam,
               "projection_distance": dist, "box": box.e_max, "vertices": vs.A.shape[0],
               "refinements": rounds, "oracle": oracle,
               "oracle_resolution": _resolution(box, cfg)}
    dump_json(summary, os.path.join(args.out, "synthesis.json"))
    if res.plf is not None and res.ok:
        res.plf.save(os.path.join(args.out, "plf.json"))
    print(f"{res.status}: {res.iterations} iteration(s), {res.elapsed:.2f}s {res.message}".rstrip())
    if res.ok:
        return EXIT_OK
    return EXIT_FAIL if res.status == "fail" else EXIT_CAP


def _finish_run(run, out) -> int:
    run.save(out)
    rep = run.report()
    for b, tr in run.traces.items():
        print(f"{b}: {len(tr.V)} steps, |E|_inf = {rep['E_' + b]:.6g}, "
              f"final policy {int(tr.pi[-1]) + 1}, V = {tr.V[-1]:.6g} (rho {run.plf.rho:.6g})")
    if run.did_not_enter:
        print(str(DidNotEnterIsoa(f"DidNotEnterIsoa: {', '.join(run.did_not_enter)} "
                                  "trace never reached the level set")), file=sys.stderr)
    return EXIT_OK


def cmd_run_vi(args) -> int:
    model = load_model(args.model)
    cfg = _run_config(args, model, opt=args.opt, max_iter=args.max_iter, tol=args.tol)
    plf = Plf.load(args.plf)
    run = run_pipeline(model, _target(args, model), cfg, _w0(args, model), plf=plf)
    return _finish_run(run, args.out)


def cmd_casestudy(args) -> int:
    bundle = load_bundle(args.name, args.params, args.q)
    model = bundle.model
    base = bundle.config(args.engine)
    cfg = _run_config(args, model, base, opt=args.opt, max_iter=args.max_iter, tol=args.tol)
    w0 = _w0(args, model)
    target = _target(args, model)
    if target is not None and not args.lam:
        cfg.lam = None
    run = run_pipeline(model, target if target is not None else bundle.w_tar, cfg,
                       bundle.w0 if w0 is None else w0)
    run.label = args.target_id
    return _finish_run(run, args.out)


def cmd_report(args) -> int:
    text = emit_report(collect_rows(args.runs), args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "synthesize": cmd_synthesize, "run-vi": cmd_run_vi,
            "casestudy": cmd_casestudy, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except (ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        _dump_failed(args, exc)
        return EXIT_FAIL
    except SolverTimeout as exc:
        print(f"error: {exc}", file=sys.stderr)
        _dump_failed(args, exc)
        return EXIT_CAP


def _dump_failed(args, exc):
    res = getattr(exc, "result", None)
    out = getattr(args, "out", None)
    if res is None or not out:
        return
    os.makedirs(out, exist_ok=True)
    dump_json(res.state_json(), os.path.join(out, "cegis_state.json"))
    rep = {"target": getattr(args, "target_id", "W1"), "status": res.status,
           "message": res.message, **getattr(args, "run_info", {})}
    dump_json(rep, os.path.join(out, "report.json"))


if __name__ == "__main__":
    sys.exit(main())
