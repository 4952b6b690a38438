"""Summary tables in the layout of per-engine blocks (SMT-PLF, Opt-PLF)."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass

BLOCKS = (("smt", "SMT-PLF"), ("milp", "Opt-PLF"))
BLOCK_COLS = ("pi", "E_lower", "E_upper", "T_synth", "T_vi")
KEY_COLS = ("n", "q", "W_tar")


@dataclass
class ReportRow:
    n: int
    q: int
    target: str
    engine: str
    pi: int | None = None
    e_lower: float | None = None
    e_upper: float | None = None
    t_synth: float | None = None
    t_vi: float | None = None
    status: str = "success"

    @property
    def ok(self) -> bool:
        return self.status == "success"

    @classmethod
    def from_report(cls, rep: dict, target: str = "W1") -> "ReportRow":
        pol = rep.get("policy") or {}
        first = pol.get("lower") or pol.get("upper") or {}
        return cls(rep["n"], rep["q"], rep.get("target", target), rep["engine"],
                   first.get("final"), rep.get("E_lower"), rep.get("E_upper"),
                   rep.get("T_synth"), rep.get("T_vi"), rep.get("status", "success"))


def _fmt(v, digits=4):
    if v is None:
        return "--"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def _cells(row: ReportRow | None):
    if row is None or not row.ok:
        return ["--"] * len(BLOCK_COLS)
    return [_fmt(row.pi), _fmt(row.e_lower), _fmt(row.e_upper), _fmt(row.t_synth, 2),
            _fmt(row.t_vi, 2)]


def table(rows) -> tuple[list[str], list[list[str]]]:
    """Header and body with one line per (n, q, target), engines side by side."""
    if not rows:
        raise ValueError("report needs at least one row")
    keys, grouped = [], {}
    for r in rows:
        k = (r.n, r.q, r.target)
        if k not in grouped:
            keys.append(k)
            grouped[k] = {}
        grouped[k][r.engine] = r
    header = list(KEY_COLS)
    for _, label in BLOCKS:
        header += [f"{label} {c}" for c in BLOCK_COLS]
    body = []
    for k in keys:
        line = [str(k[0]), str(k[1]), k[2]]
        for eng, _ in BLOCKS:
            line += _cells(grouped[k].get(eng))
        body.append(line)
    return header, body


def emit_report(rows, fmt: str = "md") -> str:
    header, body = table(rows)
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(body)
        return buf.getvalue()
    if fmt != "md":
        raise ValueError(f"unknown report format {fmt!r}")
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(line) + " |" for line in body]
    return "\n".join(out) + "\n"


def collect_rows(paths) -> list[ReportRow]:
    """Rows from run directories or report.json files, in the given order."""
    rows = []
    for i, p in enumerate(paths):
        f = os.path.join(p, "report.json") if os.path.isdir(p) else p
        with open(f) as fh:
            rep = json.load(fh)
        rows.append(ReportRow.from_report(rep, f"W{i + 1}"))
    return rows
