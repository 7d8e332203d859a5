"""Command line front end: ``lapscatter run|compare|plotdata``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .pipeline import OUT_ENV, QUANTITIES, TOLERANCES, compare_runs, emit_plot_data, run_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lapscatter", description="Stationary scattering on desk-scale models.")
    p.add_argument("--tol-profile", choices=sorted(TOLERANCES), default="default")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help=f"output directory (overrides ${OUT_ENV})")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    c = sub.add_parser("compare", help="compare two run manifests")
    c.add_argument("manifest_a")
    c.add_argument("manifest_b")
    d = sub.add_parser("plotdata", help="write plot-ready columns")
    d.add_argument("manifest")
    d.add_argument("quantity", choices=QUANTITIES)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    if args.command == "run":
        res = run_scenario(args.config, args.out, args.tol_profile, args.threads)
        for c in res.checks:
            print(c.line())
        if res.message:
            print(res.message, file=sys.stderr)
        if res.out_dir is not None:
            print(f"artifacts: {res.out_dir}")
        return res.exit_code
    try:
        if args.command == "compare":
            print(json.dumps(compare_runs(args.manifest_a, args.manifest_b), indent=2, sort_keys=True))
        else:
            print(emit_plot_data(args.manifest, args.quantity, args.out))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
