"""Command-line surface: run a scenario, audit emitted artifacts, summarize a run.

Exit codes: 0 success, 1 verification failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .metrics import GOALS
from .scenario import ConfigError, parse_config, run_scenario, verify_ledger_cmd


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    summary = run_scenario(config, out_dir=args.output)
    for report in summary.reports:
        verdicts = "  ".join(f"{g}={report.goals[g].verdict}" for g in GOALS)
        print(f"request {report.request_id}: {verdicts}")
    print(f"final model digest: {summary.final_model_digest}")
    print(f"ledger head:        {summary.ledger_head}")
    print(f"simulated elapsed:  {summary.simulated_elapsed:.6g} units")
    print(f"artifacts under:    {args.output}")
    return 0 if summary.all_pass else 1


def _cmd_verify_ledger(args: argparse.Namespace) -> int:
    code, findings = verify_ledger_cmd(args.ledger, args.checkpoints)
    for line in findings:
        print(line)
    return code


def _cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.summary)
    if not path.is_file():
        print(f"summary file not found: {path}", file=sys.stderr)
        return 2
    data = json.loads(path.read_text(encoding="utf-8"))
    rows = [("request", *GOALS)]
    for rid, verdicts in sorted(data.get("verdicts", {}).items(), key=lambda kv: int(kv[0])):
        rows.append((rid, *(verdicts[g] for g in GOALS)))
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)))
    print(f"final model digest: {data.get('final_model_digest')}")
    print(f"throughput: {data.get('throughput')} requests per time unit")
    return 0 if data.get("all_pass") else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedunlearn",
        description="Deterministic federated unlearning simulator with verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario config end to end")
    p_run.add_argument("config", help="path to the scenario JSON config")
    p_run.add_argument("-o", "--output", required=True, help="directory for emitted artifacts")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify-ledger", help="audit an emitted ledger + checkpoint store")
    p_verify.add_argument("ledger", help="path to ledger.jsonl")
    p_verify.add_argument("checkpoints", help="path to the checkpoints directory")
    p_verify.set_defaults(func=_cmd_verify_ledger)

    p_report = sub.add_parser("report", help="print the verdict table from a run summary")
    p_report.add_argument("summary", help="path to run_summary.json")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
