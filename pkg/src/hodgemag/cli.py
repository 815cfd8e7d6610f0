"""Command line interface.

    hodgemag run --config suite.ini
    hodgemag spectrum --set geometry=torus2 --set geometry.n=64
    hodgemag mane --config suite.ini --scenario torus-sine
    hodgemag verify results/suite.jsonl
    hodgemag plot-data results/suite.jsonl --series comass
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

OUT_DIR_ENV = "HODGEMAG_OUT_DIR"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

ANALYSIS_COMMANDS = {"spectrum": "spectrum", "mane": "mane", "flow": "flow",
                     "shadow": "shadow", "iso": "isoperimetric"}


def _global_flags(p, default):
    p.add_argument("--config", default=default, help="scenario file (INI)")
    p.add_argument("--seed", type=int, default=default, help="override the run seed")
    p.add_argument("--threads", type=int, default=default,
                   help="scenario-level thread budget (1 = deterministic)")
    p.add_argument("--tol-scale", type=float, default=default, help="multiply every tolerance")
    p.add_argument("--out-dir", default=default, help=f"output directory (default ${OUT_DIR_ENV} or ./results)")


def build_parser():
    p = argparse.ArgumentParser(prog="hodgemag", description="Coexact spectra, magnetic critical values, "
                                "flows, shadowing and stable-area checks.")
    _global_flags(p, None)
    # the same flags are accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    for name in list(ANALYSIS_COMMANDS) + ["run"]:
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} analysis" if name != "run" else "run every scenario")
        sp.add_argument("--scenario", action="append", help="restrict to scenario id (repeatable)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="inline scenario keys when no config is given")
        sp.add_argument("--append", action="store_true", help="append to existing output")
        sp.add_argument("--name", help="output file stem")

    vp = sub.add_parser("verify", parents=[common], help="re-derive verdicts from stored records")
    vp.add_argument("records", help="JSONL file written by run")

    pp = sub.add_parser("plot-data", parents=[common], help="extract a CSV series from stored records")
    pp.add_argument("records")
    pp.add_argument("--series", choices=("spectrum", "covers", "comass"), required=True)
    pp.add_argument("--output", help="CSV path (default stdout)")
    return p


def _out_dir(args):
    return args.out_dir or os.environ.get(OUT_DIR_ENV) or "results"


def _inline_config(args, analysis):
    from .config import RunConfig, parse_value, scenario_from_items

    items = []
    for kv in args.set:
        if "=" not in kv:
            raise SystemExit(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        items.append((k.strip(), parse_value(v)))
    keys = {k for k, _ in items}
    if "analyses" not in keys:
        items.append(("analyses", [analysis]))
    seed = args.seed if args.seed is not None else 0
    sc = scenario_from_items("inline", items, seed, args.threads or 1, args.tol_scale or 1.0)
    return RunConfig([sc], seed, args.threads or 1, args.tol_scale or 1.0, None)


def _print_record(record):
    print(f"== {record['scenario']}")
    for name, part in record["results"].items():
        if isinstance(part, dict) and "error" in part:
            print(f"  {name}: ERROR {part['error']['type']}: {part['error']['message']}")
        else:
            print(f"  {name}: ok")
    for row in record.get("verdicts", []):
        _print_verdict(row)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _print_verdict(row):
    print(f"  {row['verdict']:<12} {row['claim']:<36} left={_fmt(row['left'])} "
          f"right={_fmt(row['right'])} tol={_fmt(row['tol'])} {row.get('reason') or ''}".rstrip())


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None or args.threads <= 1:
        # single-thread BLAS keeps reductions in a fixed order
        for var in THREAD_VARS:
            os.environ.setdefault(var, "1")

    from .config import ConfigError, DependencyError, load_config
    from . import harness

    if args.command == "verify":
        records = harness.read_records(args.records)
        fail = False
        for r in records:
            print(f"== {r['scenario']}")
            for row in harness.verify(r):
                _print_verdict(row)
                fail = fail or row["verdict"] == "FAIL"
        return 1 if fail else 0

    if args.command == "plot-data":
        rows = harness.plot_series(harness.read_records(args.records), args.series)
        fh = open(args.output, "w", newline="") if args.output else sys.stdout
        try:
            if rows:
                wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
                wr.writeheader()
                wr.writerows(rows)
        finally:
            if args.output:
                fh.close()
        return 0

    analysis = ANALYSIS_COMMANDS.get(args.command)
    try:
        if args.config:
            cfg = load_config(args.config, args.seed, args.threads, args.tol_scale)
        elif args.set:
            cfg = _inline_config(args, analysis or "verify")
        else:
            parser.error("give --config or inline --set keys")
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    analyses = None
    if analysis is not None and args.config:
        # relative flow speeds come from the critical value
        analyses = [analysis] + (["mane"] if analysis == "flow" else [])
    stem = args.name or (None if args.config else (analysis or "inline"))
    _, code = harness.run(cfg, _out_dir(args), stem=stem, append=args.append,
                          only=set(args.scenario) if args.scenario else None,
                          analyses=analyses, echo=_print_record)
    return code


if __name__ == "__main__":
    sys.exit(main())
