"""Deterministic JSON and CSV output.

Files go to ``{out_dir}/{experiment}/{run_id}.json`` (and ``.csv``).  JSON
is written with sorted keys and no timestamps; non-finite floats become
``null``.  CSV files use a fixed header, minimal RFC 4180 quoting, ``.``
decimals and LF line endings.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

__all__ = [
    "final_state_header",
    "SWEEP_HEADER",
    "SLOPE_HEADER",
    "CERTIFY_HEADER",
    "CHECKS_HEADER",
    "to_json",
    "csv_text",
    "emit_report",
]

SWEEP_HEADER = ["point", "eta", "dim", "mu", "epsilon", "kl", "kl_se", "kl_method", "tv", "tv_se",
                "w_beta", "w_beta_se", "pinsker", "bolley_villani", "status", "run_id"]
SLOPE_HEADER = ["axis", "group", "slope", "slope_se", "ci_low", "ci_high", "n_points", "status", "monotone"]
CERTIFY_HEADER = ["check", "passed", "expected_failure", "trials", "worst_slack", "worst_ratio", "tolerance"]
CHECKS_HEADER = ["verdict", "dim", "p", "n", "mu", "estimate", "stderr", "lhs", "rhs", "allowance", "passed"]


def final_state_header(dim: int):
    return ["chain", "diverged_step"] + [f"x{j + 1}" for j in range(dim)]


def _clean(obj):
    """Plain JSON types; NaN and infinities become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def to_json(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return repr(x) if math.isfinite(x) else ""
    if isinstance(v, dict):
        return ";".join(f"{k}={_cell(x)}" for k, x in v.items())
    return str(v)


def _quote(field: str) -> str:
    # csv.writer leaves a bare CR unquoted when the terminator is LF
    if any(c in field for c in ',"\r\n'):
        return '"' + field.replace('"', '""') + '"'
    return field


def csv_text(header, rows) -> str:
    lines = [",".join(_quote(str(h)) for h in header)]
    lines += [",".join(_quote(_cell(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _verdict_cell(v):
    return None if v is None else ("pass" if v else "fail")


def _result_csvs(result) -> dict:
    """``{suffix: csv text}`` for a run, sweep, checks or certify result."""
    d = result.to_dict()
    kind = d["kind"]
    if kind == "run":
        ens = result.ensemble
        rows = ([c, int(ens.diverged[c]) if ens.diverged[c] >= 0 else None, *ens.finals[c]]
                for c in range(ens.chains))
        return {".csv": csv_text(final_state_header(ens.finals.shape[1]), rows)}
    if kind == "sweep":
        rows = []
        for r in d["rows"]:
            p = r["point"]
            rows.append([_cell(p), r["eta"], r["dim"], p.get("mu"), p.get("epsilon"), r["kl"], r["kl_se"],
                         r["kl_method"], r["tv"], r["tv_se"], r["w_beta"], r["w_beta_se"],
                         _verdict_cell(r["verdicts"].get("pinsker")),
                         _verdict_cell(r["verdicts"].get("bolley_villani")), r["status"], r["run_id"]])
        slopes = []
        for s in d["slopes"]:
            ci = s["ci95"] or (None, None)
            slopes.append([s["axis"], _cell(s["group"]), s["slope"], s["slope_se"], ci[0], ci[1],
                           s["n_points"], s["status"], s["monotone"]])
        return {".csv": csv_text(SWEEP_HEADER, rows), "_slopes.csv": csv_text(SLOPE_HEADER, slopes)}
    if kind == "checks":
        rows = []
        for name, v in d["verdicts"].items():
            rows.append([name, v.get("dim"), v.get("p"), v.get("n"), v.get("mu"), v.get("estimate"), v.get("stderr"),
                         v["lhs"], v["rhs"], v["allowance"], _verdict_cell(v["passed"])])
        return {".csv": csv_text(CHECKS_HEADER, rows)}
    rows = []
    for c in d["certificates"]:
        rows.append([c["check"], c["passed"], c["check"].startswith("control_"), c["trials"],
                     c["worst_slack"], c["worst_ratio"], c["tolerance"]])
    return {".csv": csv_text(CERTIFY_HEADER, rows)}


def emit_report(result, out_dir) -> dict:
    """Write the JSON report and CSV files; returns paths keyed ``json``, ``csv`` and, for sweeps, ``slopes``."""
    d = result.to_dict()
    folder = Path(out_dir) / str(d["experiment"])
    try:
        folder.mkdir(parents=True, exist_ok=True)
        paths = {}
        p = folder / f"{d['run_id']}.json"
        p.write_bytes(to_json(d).encode("utf-8"))
        paths["json"] = p
        for suffix, text in _result_csvs(result).items():
            p = folder / f"{d['run_id']}{suffix}"
            p.write_bytes(text.encode("utf-8"))
            paths[suffix[:-len(".csv")].strip("_") or "csv"] = p
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report: {exc.strerror}", str(exc.filename or folder)) from None
    return paths
