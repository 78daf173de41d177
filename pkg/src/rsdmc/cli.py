"""Command line entry point: ``rsdmc {sample,report,snapshot,validate-schedule}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, RSDMCError
from .harness import (
    as_sweep,
    default_config_path,
    dump_particles,
    format_table,
    load_config,
    load_report,
    run_experiment,
    snapshot_trajectory,
    write_manifest,
)
from .samplers import resolve_workers
from .schedule import theoretical_schedule, validate
from .target import load_mixture


def _common(p: argparse.ArgumentParser, out_default: str | None = "runs/latest") -> None:
    p.add_argument("--config", type=Path, default=None, help="JSON config (default: shipped sweep)")
    p.add_argument("--out", type=Path, default=Path(out_default) if out_default else None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="replace the config's seeds with this one")
    p.add_argument("--workers", type=int, default=1, help="worker threads (RSDMC_WORKERS overrides)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsdmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run a config and write particles, report.json and manifest.json")
    _common(p)

    p = sub.add_parser("report", help="print the MMD table of a finished run")
    p.add_argument("--out", type=Path, default=Path("runs/latest"), help="run directory or report.json")
    p.add_argument("--json", action="store_true", help="print the summary as JSON")

    p = sub.add_parser("snapshot", help="particle clouds at gradient-count checkpoints of one run")
    _common(p)
    p.add_argument("--checkpoints", required=True, help="comma separated gradient counts per particle")

    p = sub.add_parser("validate-schedule", help="check a schedule against the log-concavity conditions")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--L", type=float, default=None, help="smoothness constant (default: from the benchmark)")
    p.add_argument(
        "--theory", metavar="L,M,d,EPS", default=None, help="validate the theoretical schedule for these constants"
    )
    return parser


def _sample(args) -> int:
    report = run_experiment(args.config, out_dir=args.out, seed=args.seed, workers=args.workers)
    print(format_table(report))
    for c in report.cells:
        if c["status"] != "ok":
            print(f"FAILED {c['sampler']} budget={c['budget']} seed={c['seed']}: {c['error']}", file=sys.stderr)
    print(f"wrote {args.out / 'report.json'}")
    return 0 if report.ok else 1


def _report(args) -> int:
    report = load_report(args.out)
    if args.json:
        print(json.dumps(report.summary(), sort_keys=True, indent=1))
    else:
        print(format_table(report))
    return 0 if report.ok else 1


def _snapshot(args) -> int:
    path = args.config or Path(str(default_config_path()).replace("default_experiment", "rsdmc_v1"))
    config = load_config(path)
    if args.seed is not None:
        config = dict(config, seed=args.seed)
    checkpoints = [int(c) for c in args.checkpoints.split(",") if c.strip()]
    sets = snapshot_trajectory(config, checkpoints, workers=resolve_workers(args.workers))
    for c, ps in zip(checkpoints, sets):
        dest = dump_particles(ps, args.out / f"{ps.sampler_id}_grad{c}.csv")
        print(dest)
    write_manifest(args.out)
    return 0


def _validate(args) -> int:
    if args.theory:
        try:
            L, M, d, eps = (float(v) for v in args.theory.split(","))
        except ValueError as exc:
            raise ConfigError("--theory expects L,M,d,EPS") from exc
        params = theoretical_schedule(L, M, int(d), eps)
        results = {"theoretical": [v.to_dict() for v in validate(params, L)]}
    else:
        config = load_config(args.config or default_config_path())
        sweep = as_sweep(config)
        L = args.L if args.L is not None else load_mixture(None).smoothness_L
        results = {}
        for s in sweep.samplers:
            for b in sweep.budgets:
                results[f"{s}@{b}"] = [v.to_dict() for v in validate(sweep.schedule(s, b), L)]
    print(json.dumps(results, sort_keys=True, indent=1))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"sample": _sample, "report": _report, "snapshot": _snapshot, "validate-schedule": _validate}
    try:
        return handler[args.command](args)
    except (RSDMCError, ValueError, OSError) as exc:
        print(f"rsdmc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
