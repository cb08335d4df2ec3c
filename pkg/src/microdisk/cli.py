"""Command-line interface: microdisk {simulate,sweep,fit,cqed,report}.

Every subcommand takes a TOML config describing the job; the subcommand
must match the config's job.kind.  Exit codes: 0 success, 1 configuration
error, 2 completed with partial task failures.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config
from .jobs import run_job


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microdisk",
        description="Whispering-gallery microcavity simulation and analysis")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ("simulate", "sweep", "fit", "cqed", "report"):
        p = sub.add_parser(kind, help=f"run a {kind} job")
        p.add_argument("--config", required=True, help="TOML job file")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (overrides config and "
                            "MICRODISK_WORKERS)")
        p.add_argument("--seed", type=int, default=None, help="override job seed")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = parse_config(args.config, out_override=args.out,
                           workers_override=args.workers, seed_override=args.seed)
        if job.kind != args.command:
            raise ConfigError(
                f"config job.kind = {job.kind!r} does not match "
                f"subcommand {args.command!r}")
        manifest, failed = run_job(job)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    done = sum(1 for t in manifest["tasks"] if t["status"] == "ok")
    print(f"{job.kind}: {done} task(s) ok, {failed} failed; "
          f"artifacts in {job.out_dir}")
    if failed:
        for t in manifest["tasks"]:
            if t["status"] == "failed":
                print(f"  failed {t['key']}: {t['error']}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
