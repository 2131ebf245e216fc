#!/usr/bin/env python3
"""End-to-end demo on a synthetic corpus.

Builds a store with a few metrics (one canary), injects a regression and a
testbed anomaly, then walks the whole pipeline: detection, canary policy,
triage, revision comparison, CSV export. Point a browser at the served UI
afterwards with `perfbaron --db demo.db serve`.
"""

import argparse
import random
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from perfbaron.canarypolicy import CanaryPolicy, PolicyConfig
from perfbaron.changepoint import CpdParams, run_detection
from perfbaron.compare import compare_revisions, export_csv, filter_and_sort
from perfbaron.model import MetricKey, RawEvent, ResultStore, TestRun
from perfbaron.outlier import GesdParams
from perfbaron.triage import ActionKind, TriageAction, list_groups, transition

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)


def make_run(i, rerun_index=0):
    return TestRun(
        run_id=f"run-{i}-{rerun_index}", project="demo", configuration="standalone",
        task="crud", revision=f"{i:07x}", order=i,
        commit_date=T0 + timedelta(hours=3 * i),
        executed_at=T0 + timedelta(hours=3 * i, minutes=20),
        rerun_index=rerun_index,
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--db", default="demo.db")
    parser.add_argument("--commits", type=int, default=120)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    Path(args.db).unlink(missing_ok=True)
    store = ResultStore(args.db)
    rng = random.Random(args.seed)
    regression_at = args.commits * 2 // 3

    print(f"ingesting {args.commits} commits into {args.db} ...")
    for i in range(args.commits):
        run = make_run(i)
        base_latency = 52_000.0 if i >= regression_at else 40_000.0
        events = [
            RawEvent(run_id=run.run_id, test="insert_one", op_index=j,
                     duration_ns=rng.expovariate(1.0 / base_latency), worker=j % 4)
            for j in range(400)
        ]
        store.ingest_raw(run, events)
        canary_key = MetricKey("demo", "standalone", "crud", "canary_ping", "Throughput")
        canary_value = rng.gauss(5_000.0, 25.0)
        if i == args.commits - 1:
            canary_value *= 3.0  # a testbed anomaly on the newest run
        store.ingest_preaggregated(run, [(canary_key, canary_value)])

    print("running change point detection ...")
    results = run_detection(store, CpdParams(rng_seed=args.seed))
    for key, cps in sorted(results.items()):
        if cps:
            where = ", ".join(str(cp.order_index) for cp in cps)
            print(f"  {key.canonical()}: change at [{where}]")

    print("evaluating the canary policy on the newest run ...")
    policy = CanaryPolicy(
        store,
        PolicyConfig(enabled=True, gesd=GesdParams(max_outliers=5, window=60)),
    )
    decision = policy.evaluate(f"run-{args.commits - 1}-0")
    print(f"  verdict: {decision.verdict.value}")
    for item in policy.reschedule_queue():
        print(f"  reschedule queued: {item['task_run_id']} (rerun {item['rerun_index']})")

    print("triaging the regression ...")
    groups = list_groups(store)
    for group in groups:
        print(f"  {group.revision}: {len(group.change_points)} change points")
    if groups:
        ids = [cp.id for cp in groups[0].change_points]
        updated = transition(
            store,
            TriageAction("demo-baron", ids, ActionKind.CREATE_TICKET,
                         {"summary": "insert_one latency regression"}),
        )
        print(f"  ticketed as {updated[0].ticket_id}")

    base = f"{regression_at - 10:07x}"
    cand = f"{args.commits - 5:07x}"
    print(f"comparing {base} -> {cand} ...")
    report = filter_and_sort(compare_revisions(store, base, cand))
    for row in report.rows:
        pct = "n/a" if row.percent_change is None else f"{row.percent_change:+.1f}%"
        print(f"  {row.key.canonical()}: {pct}")
    csv_path = Path(args.db).with_suffix(".csv")
    csv_path.write_bytes(export_csv(report))
    print(f"wrote {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
