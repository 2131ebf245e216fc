"""Canary outlier policy: suppress suspect task runs and request reruns.

Canary tests measure the testbed, so an outlier on one taints every result
of the task run. The policy computes and records outlier reports whether
or not it is enabled (disabled mode is log-only), honors operator mutes,
and caps reruns so a persistent testbed shift cannot burn money forever.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from .changepoint import store_change_points
from .errors import NotFoundError, ValidationError
from .model import MetricKey, ResultStore, Series, TestRun, format_ts, parse_ts, utcnow
from .outlier import GesdParams, gesd, latest_point_is_outlier

__all__ = [
    "Verdict",
    "Mute",
    "CanaryDecision",
    "PolicyConfig",
    "CanaryPolicy",
    "evaluate_task",
]


class Verdict(str, Enum):
    ACCEPT = "ACCEPT"
    SUPPRESS_AND_RERUN = "SUPPRESS_AND_RERUN"
    SUPPRESS_ONLY = "SUPPRESS_ONLY"
    MUTED_SKIP = "MUTED_SKIP"
    DISABLED_LOG_ONLY = "DISABLED_LOG_ONLY"


@dataclass(frozen=True)
class Mute:
    key_pattern: str
    created_by: str
    reason: str
    order_start: int | None = None
    order_end: int | None = None  # half-open
    mute_id: int | None = None
    active: bool = True

    def __post_init__(self):
        try:
            re.compile(self.key_pattern)
        except re.error as exc:
            raise ValidationError(f"invalid mute pattern: {exc.msg}") from exc

    def covers(self, key: MetricKey, order: int) -> bool:
        if not self.active:
            return False
        if not re.search(self.key_pattern, key.canonical()):
            return False
        if self.order_start is not None and order < self.order_start:
            return False
        if self.order_end is not None and order >= self.order_end:
            return False
        return True


@dataclass(frozen=True)
class CanaryDecision:
    task_run_id: str
    verdict: Verdict
    triggering_keys: list[MetricKey]
    decided_at: datetime = field(default_factory=utcnow)


@dataclass(frozen=True)
class PolicyConfig:
    enabled: bool = False
    max_reruns: int = 3
    gesd: GesdParams = field(default_factory=GesdParams)

    def __post_init__(self):
        if self.max_reruns < 0:
            raise ValidationError("max_reruns must be >= 0")


def evaluate_task(
    task_run: TestRun,
    canary_series: list[Series],
    config: PolicyConfig,
    mutes: list[Mute],
    change_point_indices: dict[MetricKey, list[int]] | None = None,
) -> tuple[CanaryDecision, dict[MetricKey, bool]]:
    """Pure decision: which verdict does this run get, and why.

    Outlier checks always run, even when the policy is disabled; only the
    consequences differ. Returns the decision plus the per-key outlier
    flags so callers can persist the evidence trail.
    """
    flags: dict[MetricKey, bool] = {}
    for series in canary_series:
        cps = (change_point_indices or {}).get(series.key)
        flags[series.key] = latest_point_is_outlier(
            series, config.gesd, change_point_indices=cps
        )
    triggering = sorted(k for k, hit in flags.items() if hit)
    if not config.enabled:
        return CanaryDecision(task_run.run_id, Verdict.DISABLED_LOG_ONLY, triggering), flags
    if not triggering:
        return CanaryDecision(task_run.run_id, Verdict.ACCEPT, []), flags
    unmuted = [
        k for k in triggering
        if not any(m.covers(k, task_run.order) for m in mutes)
    ]
    if not unmuted:
        return CanaryDecision(task_run.run_id, Verdict.MUTED_SKIP, triggering), flags
    if task_run.rerun_index < config.max_reruns:
        verdict = Verdict.SUPPRESS_AND_RERUN
    else:
        verdict = Verdict.SUPPRESS_ONLY
    return CanaryDecision(task_run.run_id, verdict, triggering), flags


class CanaryPolicy:
    """Store-backed policy engine: evaluates runs and persists the outcome."""

    def __init__(self, store: ResultStore, config: PolicyConfig | None = None):
        self.store = store
        self.config = config or PolicyConfig()

    def canary_series_for(self, run: TestRun) -> list[Series]:
        """Canary series of the run's configuration, trimmed to end at it."""
        series_list = []
        for key in self.store.canary_keys_for(run.project, run.configuration):
            series = self.store.get_series(key)
            points = [p for p in series.points if p.order <= run.order]
            if not points or points[-1].run_id != run.run_id:
                continue
            series_list.append(Series(key=key, points=points))
        return series_list

    def evaluate(self, task_run_id: str) -> CanaryDecision:
        run = self.store.get_run(task_run_id)
        canary_series = self.canary_series_for(run)
        cp_indices = {
            s.key: [cp.order_index for cp in store_change_points(self.store, s.key)]
            for s in canary_series
        }
        decision, flags = evaluate_task(
            run, canary_series, self.config, self.list_mutes(),
            change_point_indices=cp_indices,
        )
        self._persist_outlier_reports(run, canary_series)
        if decision.verdict in (Verdict.SUPPRESS_AND_RERUN, Verdict.SUPPRESS_ONLY):
            self.store.suppress_run(run.run_id)
        if decision.verdict is Verdict.SUPPRESS_AND_RERUN:
            self._append_reschedule(run, decision)
        self._persist_decision(decision)
        return decision

    def _persist_outlier_reports(self, run: TestRun, canary_series: list[Series]) -> None:
        now = utcnow()
        with self.store._lock, self.store._conn:
            for series in canary_series:
                n = len(series.points)
                if n < self.config.gesd.window:
                    continue
                report = gesd(series.values(), self.config.gesd)
                self.store._conn.execute(
                    "INSERT INTO outlier_reports (key, task_run_id, report, computed_at)"
                    " VALUES (?,?,?,?)",
                    (
                        series.key.canonical(), run.run_id,
                        json.dumps(report.to_dict()), format_ts(now),
                    ),
                )

    def _append_reschedule(self, run: TestRun, decision: CanaryDecision) -> None:
        reason = "canary outlier on " + ", ".join(
            k.canonical() for k in decision.triggering_keys
        )
        with self.store._lock, self.store._conn:
            self.store._conn.execute(
                "INSERT INTO reschedule_queue (task_run_id, reason, rerun_index, decided_at)"
                " VALUES (?,?,?,?)",
                (run.run_id, reason, run.rerun_index + 1, format_ts(decision.decided_at)),
            )

    def _persist_decision(self, decision: CanaryDecision) -> None:
        with self.store._lock, self.store._conn:
            self.store._conn.execute(
                "INSERT INTO canary_decisions (task_run_id, verdict, triggering_keys,"
                " decided_at) VALUES (?,?,?,?)",
                (
                    decision.task_run_id, decision.verdict.value,
                    json.dumps([k.canonical() for k in decision.triggering_keys]),
                    format_ts(decision.decided_at),
                ),
            )

    # -- mutes ------------------------------------------------------------------

    def apply_mute(self, mute: Mute) -> Mute:
        with self.store._lock, self.store._conn:
            cur = self.store._conn.execute(
                "INSERT INTO mutes (key_pattern, order_start, order_end, created_by,"
                " reason, active, created_at) VALUES (?,?,?,?,?,1,?)",
                (
                    mute.key_pattern, mute.order_start, mute.order_end,
                    mute.created_by, mute.reason, format_ts(utcnow()),
                ),
            )
            return Mute(
                key_pattern=mute.key_pattern, created_by=mute.created_by,
                reason=mute.reason, order_start=mute.order_start,
                order_end=mute.order_end, mute_id=cur.lastrowid, active=True,
            )

    def list_mutes(self, include_expired: bool = False) -> list[Mute]:
        where = "" if include_expired else "WHERE active = 1"
        rows = self.store._conn.execute(
            f"SELECT * FROM mutes {where} ORDER BY mute_id"
        ).fetchall()
        return [
            Mute(
                key_pattern=row["key_pattern"], created_by=row["created_by"],
                reason=row["reason"], order_start=row["order_start"],
                order_end=row["order_end"], mute_id=row["mute_id"],
                active=bool(row["active"]),
            )
            for row in rows
        ]

    def expire_mute(self, mute_id: int) -> None:
        with self.store._lock, self.store._conn:
            cur = self.store._conn.execute(
                "UPDATE mutes SET active = 0 WHERE mute_id = ?", (mute_id,)
            )
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown mute id {mute_id}")

    # -- read models ---------------------------------------------------------------

    def decisions(self) -> list[CanaryDecision]:
        rows = self.store._conn.execute(
            "SELECT * FROM canary_decisions ORDER BY id"
        ).fetchall()
        return [
            CanaryDecision(
                task_run_id=row["task_run_id"],
                verdict=Verdict(row["verdict"]),
                triggering_keys=[
                    MetricKey.from_canonical(k)
                    for k in json.loads(row["triggering_keys"])
                ],
                decided_at=parse_ts(row["decided_at"]),
            )
            for row in rows
        ]

    def outlier_reports(self) -> list[dict]:
        rows = self.store._conn.execute(
            "SELECT * FROM outlier_reports ORDER BY id"
        ).fetchall()
        return [
            {
                "key": row["key"], "task_run_id": row["task_run_id"],
                "report": json.loads(row["report"]),
                "computed_at": row["computed_at"],
            }
            for row in rows
        ]

    def reschedule_queue(self) -> list[dict]:
        rows = self.store._conn.execute(
            "SELECT * FROM reschedule_queue ORDER BY id"
        ).fetchall()
        return [
            {
                "task_run_id": row["task_run_id"], "reason": row["reason"],
                "rerun_index": row["rerun_index"], "decided_at": row["decided_at"],
            }
            for row in rows
        ]
