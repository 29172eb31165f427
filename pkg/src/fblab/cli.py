"""Command line entry point.

fblab run <config.json> [--out DIR] [--workers N] [--seed S]
fblab plot <bundle-dir>
fblab validate <config.json>

Exit codes: 0 all checks pass, 1 checks ran and some failed,
2 configuration/input error, 3 internal numerical failure.
FBLAB_WORKERS overrides --workers.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

from .errors import FBLabError, NumericalFailure, RejectedInput
from .plots import emit_plots
from .scenarios import run_scenario, validate_config


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise RejectedInput(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise RejectedInput(f"config is not valid JSON: {exc}")


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    scenarios = validate_config(cfg)
    if args.seed is not None:
        scenarios = [{**sc, "seed": args.seed} for sc in scenarios]
    workers = int(os.environ.get("FBLAB_WORKERS", args.workers))
    os.makedirs(args.out, exist_ok=True)
    if workers > 1 and len(scenarios) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            summaries = list(ex.map(lambda sc: run_scenario(sc, args.out),
                                    scenarios))
    else:
        summaries = [run_scenario(sc, args.out) for sc in scenarios]
    n_fail = 0
    for s in summaries:
        status = "pass" if s["ok"] else "FAIL"
        print(f"[{status}] {s['name']} ({s['kind']})")
        if "error" in s:
            print(f"        error: {s['error']['message']}")
        for name, ok in sorted(s.get("checks", {}).items()):
            print(f"        {'ok  ' if ok else 'FAIL'} {name}")
        n_fail += not s["ok"]
    if any("error" in s and s["error"]["type"] == "numerical_failure"
           for s in summaries):
        return 3
    return 1 if n_fail else 0


def _cmd_plot(args) -> int:
    if not os.path.isdir(args.bundle):
        raise RejectedInput(f"bundle directory not found: {args.bundle}")
    written = []
    for root, _dirs, files in os.walk(args.bundle):
        if any(f.endswith(".csv") for f in files):
            written.extend(emit_plots(root))
    for w in written:
        print(f"wrote {w}")
    if not written:
        print("no CSV series found; nothing plotted")
    return 0


def _cmd_validate(args) -> int:
    scenarios = validate_config(_load_config(args.config))
    print(f"config ok: {len(scenarios)} scenario(s)")
    for sc in scenarios:
        print(f"  {sc['name']} ({sc['kind']})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fblab",
        description="Free-boundary laboratory: scenario runner and plots")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run scenarios from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="fblab-out")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)
    p_plot = sub.add_parser("plot", help="emit SVG plots for a report bundle")
    p_plot.add_argument("bundle")
    p_plot.set_defaults(func=_cmd_plot)
    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RejectedInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FBLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
