"""Command line: ``halfplane-ac run <config>``, ``verify [--filter key]``, ``inspect <artifact>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, bundled_config
from .pipeline import output_root, run_pipeline, verdict_table, verify, verify_status


def _config_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled_config(arg)
    except FileNotFoundError:
        raise SystemExit(f"config {arg!r} is neither a file nor a bundled config name")


def _cmd_run(args) -> int:
    try:
        outcome = run_pipeline(_config_path(args.config), args.output, resume=args.resume)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    print(f"artifacts: {outcome.directory}")
    print((outcome.directory / "summary.txt").read_text(), end="")
    for f in outcome.faults:
        print(f"fault at R = {f['R']:g}: {f['fault']}: {f['message']}", file=sys.stderr)
    return outcome.status


def _cmd_verify(args) -> int:
    verdicts = verify(args.output, args.filter)
    table = verdict_table(verdicts)
    sys.stdout.write(table)
    if args.filter in ("*", ""):
        root = output_root(args.output)
        if root.exists():
            (root / "verdicts.csv").write_text(table)
    for v in verdicts:
        if v.status == "missing":
            print(f"criterion {v.number} ({v.key}): missing artifact {v.source}", file=sys.stderr)
    return verify_status(verdicts)


def _cmd_inspect(args) -> int:
    path = Path(args.artifact)
    if path.is_dir():
        summary = path / "summary.txt"
        if summary.exists():
            print(summary.read_text(), end="")
            return 0
        for child in sorted(path.iterdir()):
            print(child.name)
        return 0
    if not path.exists():
        print(f"no such artifact: {path}", file=sys.stderr)
        return 1
    if path.suffix == ".json":
        print(json.dumps(json.loads(path.read_text()), indent=2, sort_keys=True))
        return 0
    if path.suffix == ".csv" and path.with_suffix(".json").exists():
        from .solver2d import energy, load_field, pde_residual
        f = load_field(path)
        e = energy(f)
        print(f"field on R = {f.grid.R:g}, h = {f.grid.h:g}, {int(f.grid.active.sum())} nodes")
        print(f"energy {e.total:.10f} (Dirichlet {e.dirichlet_part:.10f}, potential {e.potential_part:.10f})")
        print(f"sup PDE residual {pde_residual(f).sup:.3e}")
        return 0
    print(path.read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halfplane-ac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the pipeline for a config file or bundled config name")
    r.add_argument("config")
    r.add_argument("--output", help="output root (default: $HALFPLANE_AC_OUTPUT or ./halfplane_runs)")
    r.add_argument("--resume", action="store_true", help="reuse field checkpoints written by the same config")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("verify", help="evaluate the acceptance checks from stored artifacts")
    v.add_argument("--filter", default="*", help="criterion key, number, prefix or glob")
    v.add_argument("--output")
    v.set_defaults(func=_cmd_verify)
    i = sub.add_parser("inspect", help="summarize an artifact file or run directory")
    i.add_argument("artifact")
    i.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
