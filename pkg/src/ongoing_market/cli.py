"""Command-line experiment runner.

Subcommands:
  plan     evaluate market constants and parameter feasibility
  run      simulate (one-time or ongoing), certify and summarize
  certify  recompute everything from a stored trace and compare

Exit codes: 0 success, 1 runtime failure, 2 infeasible plan,
3 certification violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness
from .market import ConfigError, SpecValidationError, load_spec_file
from .planner import InfeasiblePlanError


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_ints(text: str) -> tuple:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ongoing-market",
        description="tatonnement simulator for ongoing Fisher markets with warehouses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="parameter feasibility for a market file")
    p_plan.add_argument("--market", required=True)
    p_plan.add_argument("--rule", choices=["linear", "exponential"], default="linear")
    p_plan.add_argument("--f-init", type=float, default=2.0)
    p_plan.add_argument("--safety", type=float, default=4.0)
    p_plan.add_argument("--out", default="")

    p_run = sub.add_parser("run", help="simulate, certify and summarize")
    p_run.add_argument("--market", required=True)
    p_run.add_argument("--scenario", choices=["onetime", "ongoing"], default="ongoing")
    p_run.add_argument("--rule", choices=["linear", "exponential"], default="linear")
    p_run.add_argument("--scheduler", choices=["sync", "staggered", "random"], default="sync")
    p_run.add_argument("--seed", default="0", help="seed or comma-separated seeds")
    p_run.add_argument("--days", type=float, default=10.0)
    p_run.add_argument("--f-init", type=float, default=2.0)
    p_run.add_argument("--g", default="", help="explicit price multipliers, comma separated")
    p_run.add_argument("--eta", default="0.1", help="comma-separated eta targets")
    p_run.add_argument("--mean-gap", type=float, default=0.5)
    p_run.add_argument("--offsets", default="", help="staggered offsets, comma separated")
    p_run.add_argument("--v-init-frac", type=float, default=0.5)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")

    p_cert = sub.add_parser("certify", help="offline re-check of a stored trace")
    p_cert.add_argument("--trace", required=True)
    p_cert.add_argument("--market", required=True)
    p_cert.add_argument("--meta", default="", help="run_meta.json (defaults next to trace)")
    p_cert.add_argument("--out", default="")
    return parser


def _emit(payload: dict, out_path: str):
    text = json.dumps(payload, indent=2)
    if out_path:
        harness._atomic_write(out_path, text)
    print(text)


def cmd_plan(args) -> int:
    spec = load_spec_file(args.market)
    try:
        report = harness.plan_report(spec, args.rule, args.f_init, args.safety)
    except InfeasiblePlanError as exc:
        _emit({"infeasible": exc.certificate.to_dict()}, args.out)
        return 2
    _emit(report, args.out)
    return 0


def cmd_run(args) -> int:
    spec = load_spec_file(args.market)
    seeds = _parse_ints(args.seed)
    etas = _parse_floats(args.eta)
    multipliers = _parse_floats(args.g) if args.g else ()
    worst = 0
    summaries = []
    for seed in seeds:
        config = harness.RunConfig(
            scenario=args.scenario,
            rule=args.rule,
            scheduler=args.scheduler,
            seed=seed,
            days=args.days,
            f_init=args.f_init,
            etas=etas,
            mean_gap=args.mean_gap,
            offsets=_parse_floats(args.offsets) if args.offsets else (),
            v_init_frac=args.v_init_frac,
            price_multipliers=multipliers,
        )
        try:
            artifacts = harness.execute_run(spec, config)
        except InfeasiblePlanError as exc:
            _emit({"infeasible": exc.certificate.to_dict()}, "")
            return 2
        out_dir = args.out if len(seeds) == 1 else os.path.join(args.out, f"seed-{seed}")
        harness.save_artifacts(artifacts, out_dir, args.format)
        summaries.append(artifacts.summary)
        worst = max(worst, artifacts.exit_code)
        print(json.dumps({"seed": seed, **artifacts.summary["certification"]}))
    if len(seeds) > 1:
        harness._atomic_write(
            os.path.join(args.out, "aggregate.json"),
            json.dumps(harness.aggregate_summaries(summaries), indent=2),
        )
    return worst


def cmd_certify(args) -> int:
    meta_path = args.meta or os.path.join(os.path.dirname(args.trace), "run_meta.json")
    report = harness.certify_stored(args.trace, args.market, meta_path)
    _emit(report, args.out)
    return 0 if report["clean"] else 3


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            return cmd_plan(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_certify(args)
    except (ConfigError, SpecValidationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
