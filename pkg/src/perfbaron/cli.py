"""Command line front end; every subcommand is a thin shell over the same
operations the HTTP endpoints call.

Exit codes: 0 success, 1 validation/domain error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import changepoint as cpd
from . import compare as cmp
from . import triage
from .canarypolicy import CanaryPolicy, PolicyConfig
from .changepoint import CpdParams, TriageState
from .errors import PerfbaronError, ValidationError
from .model import (
    ResultStore,
    parse_preaggregated_line,
    parse_raw_event_line,
    parse_ts,
    run_from_dict,
)
from .outlier import GesdParams

DB_ENV_VAR = "PERFBARON_DB"


def _store(args) -> ResultStore:
    path = args.db or os.environ.get(DB_ENV_VAR, "perfbaron.db")
    return ResultStore(path)


def _load_runs_manifest(store: ResultStore, path: str) -> int:
    """Accepts a JSON array of run objects or NDJSON, one run per line."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        objs = json.loads(text)
    else:
        objs = [json.loads(line) for line in text.splitlines() if line.strip()]
    for obj in objs:
        store.upsert_run(run_from_dict(obj))
    return len(objs)


def cmd_ingest(args) -> int:
    store = _store(args)
    if args.runs:
        count = _load_runs_manifest(store, args.runs)
        print(f"registered {count} runs")
    raw_by_run: dict[str, list] = {}
    preagg_by_run: dict[str, list] = {}
    with open(args.file) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                if args.raw:
                    event = parse_raw_event_line(line)
                    raw_by_run.setdefault(event.run_id, []).append(event)
                else:
                    key, run_id, value = parse_preaggregated_line(line)
                    preagg_by_run.setdefault(run_id, []).append((key, value))
            except (ValueError, PerfbaronError) as exc:
                raise ValidationError(f"{args.file}:{lineno}: {exc}") from exc
    stored = 0
    for run_id, events in raw_by_run.items():
        run = store.get_run(run_id)
        stored += len(store.ingest_raw(run, events))
    for run_id, values in preagg_by_run.items():
        run = store.get_run(run_id)
        stored += len(store.ingest_preaggregated(run, values))
    print(f"stored {stored} measurements")
    return 0


def cmd_detect(args) -> int:
    store = _store(args)
    params = CpdParams(
        significance=args.significance,
        permutations=args.permutations,
        min_segment=args.min_segment,
        rng_seed=args.seed,
    )
    results = cpd.run_detection(store, params, key_filter=args.key)
    total = sum(len(cps) for cps in results.values())
    for key, cps in sorted(results.items()):
        if cps:
            indices = ", ".join(str(cp.order_index) for cp in cps)
            print(f"{key.canonical()}: change points at [{indices}]")
    print(f"{total} change points across {len(results)} series")
    return 0


def cmd_compare(args) -> int:
    store = _store(args)
    report = cmp.compare_revisions(store, args.base, args.candidate, key_filter=args.key)
    report = cmp.filter_and_sort(report, args.min_deviation)
    if args.csv:
        Path(args.csv).write_bytes(cmp.export_csv(report))
        print(f"wrote {len(report.rows)} rows to {args.csv}")
        return 0
    print(f"{args.base} -> {args.candidate} "
          f"(min deviation {report.min_deviation_filter})")
    if not report.rows:
        print("no rows above the deviation threshold")
    for row in report.rows:
        pct = "n/a" if row.percent_change is None else f"{row.percent_change:+.2f}%"
        dev = "n/a" if row.deviation is None else f"{row.deviation:+.2f}"
        flag = " [zero variance]" if row.zero_variance else ""
        print(f"  {row.key.canonical()}: {pct} ({dev} sigma){flag}")
    if report.skipped:
        print(f"skipped (missing one side): {len(report.skipped)}")
    return 0


def cmd_triage_list(args) -> int:
    store = _store(args)
    state = TriageState(args.state) if args.state else None
    groups = triage.list_groups(
        store,
        measurement_regex=args.measurement_regex,
        triage_state=state,
        include_canaries=args.include_canaries,
    )
    for group in groups:
        print(f"{group.revision} ({group.commit_date.date()}): "
              f"{len(group.change_points)} change points {group.state_summary}")
        for cp in group.change_points:
            print(f"    [{cp.id}] {cp.key.canonical()} @ {cp.order_index} "
                  f"p={cp.p_value:.4f} {cp.triage_state.value}")
    print(f"{len(groups)} groups")
    return 0


def cmd_triage_act(args) -> int:
    store = _store(args)
    kind = triage.ActionKind(args.action)
    payload = {}
    if args.ticket_id:
        payload["ticket_id"] = args.ticket_id
    if args.summary:
        payload["summary"] = args.summary
    updated = triage.transition(
        store,
        triage.TriageAction(
            actor=args.actor, targets=[int(t) for t in args.targets],
            action=kind, payload=payload,
        ),
    )
    for cp in updated:
        print(f"[{cp.id}] -> {cp.triage_state.value}"
              + (f" ticket {cp.ticket_id}" if cp.ticket_id else ""))
    return 0


def cmd_canary(args) -> int:
    store = _store(args)
    policy = CanaryPolicy(
        store,
        PolicyConfig(
            enabled=args.enabled, max_reruns=args.max_reruns,
            gesd=GesdParams(
                max_outliers=args.max_outliers,
                significance=args.significance,
                window=args.window,
            ),
        ),
    )
    decision = policy.evaluate(args.task)
    keys = ", ".join(k.canonical() for k in decision.triggering_keys) or "none"
    print(f"{decision.task_run_id}: {decision.verdict.value} (triggering: {keys})")
    return 0


def cmd_report(args) -> int:
    store = _store(args)
    report = triage.summary_report(store, parse_ts(args.start), parse_ts(args.end))
    print(json.dumps(report, indent=2))
    return 0


def cmd_serve(args) -> int:
    from .api import serve

    serve(db_path=args.db, port=args.port, host=args.host, token=args.token)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfbaron",
        description="Store benchmark results, detect change points, triage them.",
    )
    parser.add_argument(
        "--db", default=None,
        help=f"store path (default: ${DB_ENV_VAR} or ./perfbaron.db)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest an NDJSON result file")
    p.add_argument("--file", required=True)
    p.add_argument("--raw", action="store_true",
                   help="records are raw per-operation events")
    p.add_argument("--runs", help="JSON/NDJSON manifest of runs to register first")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("detect", help="run change point detection")
    p.add_argument("--key", help="regex over canonical metric keys")
    p.add_argument("--permutations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--min-segment", type=int, default=5)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("compare", help="compare two revisions")
    p.add_argument("--base", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--min-deviation", type=float, default=2.0)
    p.add_argument("--csv", help="write CSV to this path instead of printing")
    p.add_argument("--key", help="regex over canonical metric keys")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("triage", help="triage workflow")
    tsub = p.add_subparsers(dest="triage_command", required=True)
    tl = tsub.add_parser("list", help="list change point groups")
    tl.add_argument("--measurement-regex")
    tl.add_argument("--state", choices=[s.value for s in TriageState])
    tl.add_argument("--include-canaries", action="store_true")
    tl.set_defaults(func=cmd_triage_list)
    ta = tsub.add_parser("act", help="apply a triage action")
    ta.add_argument("--action", required=True,
                    choices=[a.value for a in triage.ActionKind
                             if a is not triage.ActionKind.LABEL_ROOT_CAUSE])
    ta.add_argument("--targets", nargs="+", required=True)
    ta.add_argument("--actor", default=os.environ.get("USER", "cli"))
    ta.add_argument("--ticket-id")
    ta.add_argument("--summary")
    ta.set_defaults(func=cmd_triage_act)

    p = sub.add_parser("canary", help="canary policy")
    csub = p.add_subparsers(dest="canary_command", required=True)
    ce = csub.add_parser("evaluate", help="evaluate one task run")
    ce.add_argument("--task", required=True, help="task run id")
    ce.add_argument("--enabled", action="store_true")
    ce.add_argument("--max-reruns", type=int, default=3)
    ce.add_argument("--max-outliers", type=int, default=10)
    ce.add_argument("--significance", type=float, default=0.05)
    ce.add_argument("--window", type=int, default=100)
    ce.set_defaults(func=cmd_canary)

    p = sub.add_parser("report", help="ticket summary over a period")
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8123)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--token", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except PerfbaronError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
