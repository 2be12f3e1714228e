"""Command line entry point: ``harnack-lab run`` and ``harnack-lab report``.

Exit codes: 0 when every verdict passes (or is an expected failure), 1 when a check
fails, 2 for invalid configurations, arguments or missing manifests.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .runner import ENV_OUT, ConfigError, report, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harnack-lab", description="Empirical checks of interior estimates for equations with drift.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the checks of an experiment configuration")
    r.add_argument("--config", required=True, help="TOML experiment file")
    r.add_argument("--jobs", type=int, default=1, help="concurrent checks (default 1)")
    r.add_argument("--out", default=None, help=f"output root (default: config output.dir, ${ENV_OUT} or ./harnack_out)")
    rp = sub.add_parser("report", help="emit report files from a run manifest")
    rp.add_argument("--manifest", required=True)
    rp.add_argument("--format", required=True, choices=["json", "csv", "plot-data"])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if args.jobs < 1:
            print("error: --jobs must be >= 1", file=sys.stderr)
            return 2
        try:
            manifest = run(args.config, jobs=args.jobs, out=args.out)
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        if not manifest.ok:
            from .runner import _out_dir, load_config

            d = _out_dir(load_config(args.config), args.out)
            for r in manifest.reports:
                if r["verdict"] not in ("pass", "expected-fail"):
                    print(f"check failed: {d / r['path']} ({r['verdict']})", file=sys.stderr)
            return 1
        return 0
    try:
        for path in report(args.manifest, args.format):
            print(path)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
