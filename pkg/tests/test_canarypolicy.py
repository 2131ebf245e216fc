import random
from datetime import datetime, timedelta, timezone

import pytest

from perfbaron.canarypolicy import (
    CanaryPolicy,
    Mute,
    PolicyConfig,
    Verdict,
    evaluate_task,
)
from perfbaron.errors import NotFoundError, ValidationError
from perfbaron.model import MetricKey, ResultStore, Series, SeriesPoint, TestRun
from perfbaron.outlier import GesdParams

T0 = datetime(2023, 4, 1, tzinfo=timezone.utc)
CANARY_KEY = MetricKey("sandbox", "standalone", "crud", "canary_ping", "Throughput")
GESD = GesdParams(max_outliers=5, significance=0.05, window=30)


def run_at(order, rerun_index=0, suppressed=False):
    return TestRun(
        run_id=f"run-{order}-{rerun_index}", project="sandbox",
        configuration="standalone", task="crud", revision=f"rev{order:04d}",
        order=order, commit_date=T0 + timedelta(hours=order),
        executed_at=T0 + timedelta(hours=order, minutes=10 * rerun_index),
        suppressed=suppressed, rerun_index=rerun_index,
    )


def canary_series(values):
    return Series(
        key=CANARY_KEY,
        points=[
            SeriesPoint(order=i, revision=f"rev{i:04d}",
                        commit_date=T0 + timedelta(hours=i), value=v,
                        run_id=f"run-{i}-0")
            for i, v in enumerate(values)
        ],
    )


def stable_history(n, seed=1):
    rng = random.Random(seed)
    return [rng.gauss(1000.0, 4.0) for _ in range(n)]


# -- pure decision table -----------------------------------------------------------


def test_outlier_enabled_first_attempt_reruns():
    series = canary_series(stable_history(29) + [5000.0])
    run = run_at(29)
    decision, flags = evaluate_task(
        run, [series], PolicyConfig(enabled=True, gesd=GESD), mutes=[]
    )
    assert decision.verdict is Verdict.SUPPRESS_AND_RERUN
    assert decision.triggering_keys == [CANARY_KEY]
    assert flags[CANARY_KEY] is True


def test_outlier_at_rerun_cap_suppresses_only():
    series = canary_series(stable_history(29) + [5000.0])
    run = run_at(29, rerun_index=3)
    decision, _ = evaluate_task(
        run, [series], PolicyConfig(enabled=True, max_reruns=3, gesd=GESD), mutes=[]
    )
    assert decision.verdict is Verdict.SUPPRESS_ONLY


def test_outlier_disabled_logs_only():
    series = canary_series(stable_history(29) + [5000.0])
    run = run_at(29)
    decision, flags = evaluate_task(
        run, [series], PolicyConfig(enabled=False, gesd=GESD), mutes=[]
    )
    assert decision.verdict is Verdict.DISABLED_LOG_ONLY
    assert decision.triggering_keys == [CANARY_KEY]
    assert flags[CANARY_KEY] is True  # outlier computed despite disabled


def test_clean_run_accepted():
    series = canary_series(stable_history(30))
    decision, _ = evaluate_task(
        run_at(29), [series], PolicyConfig(enabled=True, gesd=GESD), mutes=[]
    )
    assert decision.verdict is Verdict.ACCEPT


def test_missing_history_accepted():
    series = canary_series(stable_history(5))
    decision, _ = evaluate_task(
        run_at(4), [series], PolicyConfig(enabled=True, gesd=GESD), mutes=[]
    )
    assert decision.verdict is Verdict.ACCEPT


def test_muted_outlier_skips():
    series = canary_series(stable_history(29) + [5000.0])
    mute = Mute(key_pattern="canary_ping", created_by="op", reason="testbed swap")
    decision, _ = evaluate_task(
        run_at(29), [series], PolicyConfig(enabled=True, gesd=GESD), mutes=[mute]
    )
    assert decision.verdict is Verdict.MUTED_SKIP


def test_mute_order_range_bounds():
    series = canary_series(stable_history(29) + [5000.0])
    config = PolicyConfig(enabled=True, gesd=GESD)
    outside = Mute(
        key_pattern="canary", created_by="op", reason="window",
        order_start=100, order_end=200,
    )
    decision, _ = evaluate_task(run_at(29), [series], config, mutes=[outside])
    assert decision.verdict is Verdict.SUPPRESS_AND_RERUN
    covering = Mute(
        key_pattern="canary", created_by="op", reason="window",
        order_start=0, order_end=100,
    )
    decision, _ = evaluate_task(run_at(29), [series], config, mutes=[covering])
    assert decision.verdict is Verdict.MUTED_SKIP


def test_overlapping_mutes_union():
    series = canary_series(stable_history(29) + [5000.0])
    config = PolicyConfig(enabled=True, gesd=GESD)
    m1 = Mute(key_pattern="nomatch", created_by="a", reason="x")
    m2 = Mute(key_pattern="standalone/.*canary", created_by="b", reason="y")
    decision, _ = evaluate_task(run_at(29), [series], config, mutes=[m1, m2])
    assert decision.verdict is Verdict.MUTED_SKIP


def test_malformed_mute_pattern_rejected():
    with pytest.raises(ValidationError):
        Mute(key_pattern="canary(", created_by="op", reason="oops")


# -- store-backed engine -----------------------------------------------------------


def seeded_policy_store(history_len=29, seed=1):
    store = ResultStore(":memory:")
    values = stable_history(history_len, seed=seed)
    for i, v in enumerate(values):
        run = run_at(i)
        store.ingest_preaggregated(run, [(CANARY_KEY, v)])
    return store


def append_outlier_run(store, order, rerun_index):
    run = run_at(order, rerun_index=rerun_index)
    store.ingest_preaggregated(run, [(CANARY_KEY, 5000.0)])
    return run


def test_engine_scenario_rerun_cap():
    # outlier -> rerun -> outlier -> rerun -> outlier -> rerun -> outlier
    store = seeded_policy_store()
    policy = CanaryPolicy(store, PolicyConfig(enabled=True, max_reruns=3, gesd=GESD))
    verdicts = []
    for attempt in range(4):
        run = append_outlier_run(store, 29, rerun_index=attempt)
        verdicts.append(policy.evaluate(run.run_id).verdict)
    assert verdicts == [
        Verdict.SUPPRESS_AND_RERUN,
        Verdict.SUPPRESS_AND_RERUN,
        Verdict.SUPPRESS_AND_RERUN,
        Verdict.SUPPRESS_ONLY,
    ]
    assert len(policy.reschedule_queue()) == 3
    assert [r["rerun_index"] for r in policy.reschedule_queue()] == [1, 2, 3]
    # every attempt's run is now suppressed
    for attempt in range(4):
        assert store.get_run(f"run-29-{attempt}").suppressed is True
    assert len(policy.outlier_reports()) == 4


def test_engine_scenario_disabled():
    store = seeded_policy_store()
    policy = CanaryPolicy(store, PolicyConfig(enabled=False, max_reruns=3, gesd=GESD))
    for attempt in range(4):
        run = append_outlier_run(store, 29, rerun_index=attempt)
        decision = policy.evaluate(run.run_id)
        assert decision.verdict is Verdict.DISABLED_LOG_ONLY
    assert len(policy.decisions()) == 4
    assert len(policy.outlier_reports()) == 4
    assert policy.reschedule_queue() == []
    for attempt in range(4):
        assert store.get_run(f"run-29-{attempt}").suppressed is False


def test_engine_mute_affects_verdict_not_reports():
    store_a = seeded_policy_store()
    store_b = seeded_policy_store()
    policy_a = CanaryPolicy(store_a, PolicyConfig(enabled=True, gesd=GESD))
    policy_b = CanaryPolicy(store_b, PolicyConfig(enabled=True, gesd=GESD))
    policy_b.apply_mute(Mute(key_pattern="canary", created_by="op", reason="known"))
    run_a = append_outlier_run(store_a, 29, 0)
    run_b = append_outlier_run(store_b, 29, 0)
    va = policy_a.evaluate(run_a.run_id)
    vb = policy_b.evaluate(run_b.run_id)
    assert va.verdict is Verdict.SUPPRESS_AND_RERUN
    assert vb.verdict is Verdict.MUTED_SKIP
    ra = policy_a.outlier_reports()
    rb = policy_b.outlier_reports()
    assert ra[0]["report"] == rb[0]["report"]


def test_engine_expired_mute_behaves_as_absent():
    store = seeded_policy_store()
    policy = CanaryPolicy(store, PolicyConfig(enabled=True, gesd=GESD))
    mute = policy.apply_mute(Mute(key_pattern="canary", created_by="op", reason="x"))
    policy.expire_mute(mute.mute_id)
    assert policy.list_mutes() == []
    assert len(policy.list_mutes(include_expired=True)) == 1
    run = append_outlier_run(store, 29, 0)
    assert policy.evaluate(run.run_id).verdict is Verdict.SUPPRESS_AND_RERUN


def test_engine_unknown_run():
    policy = CanaryPolicy(seeded_policy_store())
    with pytest.raises(NotFoundError):
        policy.evaluate("run-nope")


def test_engine_accept_without_canaries():
    store = ResultStore(":memory:")
    key = MetricKey("sandbox", "standalone", "crud", "insert_one", "Throughput")
    run = run_at(0)
    store.ingest_preaggregated(run, [(key, 1.0)])
    policy = CanaryPolicy(store, PolicyConfig(enabled=True, gesd=GESD))
    assert policy.evaluate(run.run_id).verdict is Verdict.ACCEPT
