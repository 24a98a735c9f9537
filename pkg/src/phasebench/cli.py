"""Command-line front end: ``phasebench {table1,corrections,simulate,reference}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .campaign import REFERENCE_HEADER, format_reference_rows, reference_files, run_campaign, write_outputs
from .config import CampaignConfig, load_config
from .dut import QuadratureSpec
from .errors import PhaseBenchError
from .netcal import load_sparams
from .published import correction_rows, format_corrections, format_table1, table1_comparison, table2_sparams


def _jsonable(x):
    if isinstance(x, float) and x != x:
        return None
    return x


def cmd_table1(args) -> int:
    rows = table1_comparison()
    if args.json:
        out = [{
            "case": r["case"],
            "computed": dataclasses.asdict(r["computed"]),
            "published": dataclasses.asdict(r["published"]),
            "delta": r["delta"],
            "match": r["match"],
        } for r in rows]
        print(json.dumps(out, indent=2))
    else:
        print(format_table1(rows))
    return 0


def cmd_corrections(args) -> int:
    sets = table2_sparams() if args.sparams == "table2" else load_sparams(args.sparams)
    rows = correction_rows(sets)
    if args.json:
        print(json.dumps([r.as_dict() for r in rows], indent=2))
    else:
        print(format_corrections(rows))
    return 0


def _apply_overrides(cfg: CampaignConfig, args) -> CampaignConfig:
    proc = cfg.procedure
    if args.line_offset_db is not None:
        proc.line_offset_db = args.line_offset_db
    if args.skip_netcal:
        proc.skip_network_corrections = True
    if args.beta_max is not None:
        cfg.quadrature = QuadratureSpec(args.beta_max)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output = args.out
    if args.parallel is not None:
        cfg.parallel = max(1, args.parallel)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    report = run_campaign(cfg)
    out_dir = cfg.output if args.out is not None else cfg.resolve(cfg.output)
    path = write_outputs(report, out_dir)
    print(f"{'f_GHz':>6} {'status':>7} {'shift':>9} {'verdict':>7} {'retries':>7}")
    for row in report.summary():
        if row["status"] == "ok":
            print(f"{row['freq_ghz']:>6g} {'ok':>7} {row['shift_deg']:>9.3f} {row['verdict']:>7} {row['retries']:>7}")
        else:
            err = next(r.error for r in report.records if r.freq_ghz == row["freq_ghz"])
            print(f"{row['freq_ghz']:>6g} {'error':>7}  {err['type']}: {err['message']}")
    print(f"report written to {path}")
    return 0 if report.ok else 1


def cmd_reference(args) -> int:
    spec = QuadratureSpec(args.beta_max if args.beta_max is not None else 40.0)
    freq, block = reference_files(args.curves, args.refs, spec)
    if args.json:
        print(json.dumps({"freq_ghz": _jsonable(freq), "referencing": block}, indent=2, sort_keys=True))
    else:
        print(REFERENCE_HEADER)
        print(format_reference_rows(freq, block))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phasebench", description="Null-technique phase detector bench tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t1 = sub.add_parser("table1", help="recompute the null-depth reference table")
    t1.add_argument("--json", action="store_true")
    t1.set_defaults(func=cmd_table1)

    co = sub.add_parser("corrections", help="generator corrections from an S-parameter file")
    co.add_argument("sparams", help="S-parameter file, or 'table2' for the bundled one")
    co.add_argument("--json", action="store_true")
    co.set_defaults(func=cmd_corrections)

    si = sub.add_parser("simulate", help="run a simulated campaign from an INI config")
    si.add_argument("config")
    si.add_argument("--line-offset-db", type=float)
    si.add_argument("--beta-max", type=float)
    si.add_argument("--skip-netcal", action="store_true", help="skip the network corrections")
    si.add_argument("--seed", type=int)
    si.add_argument("--out", help="output directory")
    si.add_argument("--parallel", type=int, help="frequency points run concurrently")
    si.set_defaults(func=cmd_simulate)

    re_ = sub.add_parser("reference", help="reference exported curves offline")
    re_.add_argument("curves", nargs=2, metavar="CURVE_CSV", help="the IxI and QxI curve files")
    re_.add_argument("refs", help="reference-voltage file")
    re_.add_argument("--beta-max", type=float)
    re_.add_argument("--json", action="store_true")
    re_.set_defaults(func=cmd_reference)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PhaseBenchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
