"""edgechaos command line: run a campaign, re-analyze it, write a report.

Exit status: 0 when the action fully succeeded, 2 for usage errors, 1 for
runtime failures (aborted experiments, missing baselines, unreadable runs).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from edgechaos.backend import RemoteBackend, SimCluster
from edgechaos.config import ExperimentPlan, load_plan
from edgechaos.errors import MissingBaselineError, PlanError
from edgechaos.faults import INTENSITY_LEVELS
from edgechaos.metrics import BASELINE_INTENSITY
from edgechaos.orchestrator import run_campaign
from edgechaos.outputs import analyze_dir, write_report

ENDPOINT_ENV = "RESIL_ENDPOINT"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _err(msg: str) -> None:
    print(f"edgechaos: {msg}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgechaos", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a campaign")
    run.add_argument("--plan", required=True, type=Path)
    run.add_argument("--backend", choices=("sim", "http"), help="overrides the plan's backend")
    run.add_argument("--endpoint", help=f"http backend base URL (default: ${ENDPOINT_ENV})")
    run.add_argument("--seed", type=int, help="overrides the plan's seed")
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--quiet", action="store_true", help="no progress lines on stderr")

    for name, helptext in (("analyze", "recompute zscores.csv"), ("report", "write report.md")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--out", "--in", dest="run_dir", required=True, type=Path, help="run directory")
        p.add_argument("--quiet", action="store_true")
        if name == "analyze":
            p.add_argument("--baseline-intensity", type=int, default=BASELINE_INTENSITY, choices=INTENSITY_LEVELS)
        else:
            p.add_argument("--with", dest="compare", action="append", type=Path, default=[],
                           help="extra run directory pooled into the pattern checks")  # fmt: skip
    return parser


def _backend_factory(plan: ExperimentPlan, kind: str, endpoint: str | None):
    if kind == "http":
        return lambda: RemoteBackend(endpoint)
    return lambda: SimCluster(plan.profile(), plan.deployment_mode, plan.service_topology(), seed=plan.seed)


def cmd_run(args) -> int:
    if not args.plan.is_file():
        _err(f"plan file not found: {args.plan}")
        return EXIT_USAGE
    try:
        plan = load_plan(args.plan)
    except PlanError as exc:
        _err(f"invalid plan {args.plan}: {exc}")
        return EXIT_USAGE
    if args.seed is not None:
        plan = dataclasses.replace(plan, seed=args.seed)
    kind = args.backend or ("http" if plan.backend == "remote" else "sim")
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    if kind == "http" and not endpoint:
        _err(f"the http backend needs --endpoint or ${ENDPOINT_ENV}")
        return EXIT_USAGE
    progress = None if args.quiet else (lambda line: print(line, file=sys.stderr, flush=True))
    try:
        campaign = run_campaign(plan, _backend_factory(plan, kind, endpoint), args.out, progress)
    except PlanError as exc:
        _err(f"invalid plan {args.plan}: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _err(str(exc))
        return EXIT_FAILURE
    if campaign.aborted_cases or campaign.unrun_cases:
        _err(f"{len(campaign.aborted_cases)} aborted, {len(campaign.unrun_cases)} not run; outputs in {args.out}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        table = analyze_dir(args.run_dir, args.baseline_intensity, strict=True)
    except MissingBaselineError as exc:
        _err(str(exc))
        return EXIT_FAILURE
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot analyze {args.run_dir}: {exc}")
        return EXIT_FAILURE
    if not args.quiet:
        print(f"{len(table.rows)} z-score rows written to {args.run_dir}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        path = write_report(args.run_dir, args.compare)
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot report on {args.run_dir}: {exc}")
        return EXIT_FAILURE
    if not args.quiet:
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(message)s")
    return {"run": cmd_run, "analyze": cmd_analyze, "report": cmd_report}[args.command](args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
