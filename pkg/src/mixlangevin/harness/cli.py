"""Command line: ``mixlangevin {run,sweep,certify} <config>``.

Exit status is 0 when every verdict passes, 1 when any verdict fails and
2 for configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from ..errors import MixLangevinError
from .checks import run_checks
from .config import apply_overrides, load_config
from .experiment import run_certify, run_experiment, run_sweep
from .report import emit_report

EXIT_OK, EXIT_VERDICT, EXIT_ERROR = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="key = value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: available CPUs)")
    common.add_argument("--out-dir", default="results", help="output directory (default: results)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mixlangevin", description="ULA experiments on mixture potentials")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common],
                   help="run one ensemble and its metrics (or the Monte Carlo checks in checks.request)")
    sub.add_parser("sweep", parents=[common], help="run a grid of experiments and fit scaling slopes")
    sub.add_parser("certify", parents=[common], help="run the regularity certifiers only")
    return parser


def _summary(d: dict) -> str:
    lines = [f"{d['kind']} {d['experiment']} run_id={d['run_id']} status={d['status']}"]
    if d["kind"] == "run":
        m = d["metrics"]
        for key in ("kl", "tv", "w_beta"):
            if m.get(key) is not None:
                lines.append(f"  {key} = {m[key]:.6g} +/- {m[key + '_se']:.2g}")
        verdicts = m["verdicts"]
    elif d["kind"] == "sweep":
        for s in d["slopes"]:
            slope = "n/a" if s["slope"] is None else f"{s['slope']:.3f} +/- {s['slope_se']:.3f}"
            lines.append(f"  slope[{s['axis']}] {s['group'] or ''} = {slope} ({s['status']})")
        verdicts = {}
    else:
        verdicts = d["verdicts"]
    for name, v in verdicts.items():
        state = "skipped" if v["passed"] is None else ("pass" if v["passed"] else "FAIL")
        lines.append(f"  {name}: {state}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = apply_overrides(cfg, overrides)
        workers = args.workers or os.cpu_count() or 1
        if args.command == "run" and cfg["checks.request"]:
            result = run_checks(cfg)
        elif args.command == "run":
            result = run_experiment(cfg, workers=workers)
        elif args.command == "sweep":
            result = run_sweep(cfg, workers=workers)
        else:
            result = run_certify(cfg)
        paths = emit_report(result, args.out_dir)
    except (MixLangevinError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(_summary(result.to_dict()))
    for kind, p in paths.items():
        print(f"  wrote {p}")
    return EXIT_VERDICT if result.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
