"""Domain types and the embedded result store.

Raw per-operation events are kept append-only; measurement series are
derived tables that can always be recomputed from them. One sqlite file
holds everything; writes are serialized behind one lock.
"""

from __future__ import annotations

import json
import math
import re
import sqlite3
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .errors import ConflictError, NotFoundError, ValidationError
from .stats import describe, percentile

AGGREGATION_VERSION = "1"

RAW_EVENT_FIELDS = ("run_id", "test", "op_index", "duration_ns", "worker")
PREAGG_FIELDS = (
    "project", "configuration", "task", "test", "measurement", "run_id", "value",
)


def utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def parse_ts(value: str) -> datetime:
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_ts(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


class Source(str, Enum):
    RAW_DERIVED = "RAW_DERIVED"
    PRE_AGGREGATED = "PRE_AGGREGATED"


class RootCause(str, Enum):
    CODE = "CODE"
    TEST = "TEST"
    CONFIGURATION = "CONFIGURATION"
    SYSTEM = "SYSTEM"
    NOISE = "NOISE"
    DUPLICATE = "DUPLICATE"
    UNLABELED = "UNLABELED"


class Resolution(str, Enum):
    OPEN = "OPEN"
    FIXED = "FIXED"
    IMPROVEMENT = "IMPROVEMENT"
    REGRESSION_ACCEPTED = "REGRESSION_ACCEPTED"
    WONT_FIX = "WONT_FIX"


@dataclass(frozen=True, order=True)
class MetricKey:
    """Identity of one time series."""

    project: str
    configuration: str
    task: str
    test: str
    measurement: str

    def __post_init__(self):
        for name in ("project", "configuration", "task", "test", "measurement"):
            value = getattr(self, name)
            if not value:
                raise ValidationError(f"MetricKey.{name} must be non-empty")
            if "/" in value:
                raise ValidationError(f"MetricKey.{name} must not contain '/'")

    def canonical(self) -> str:
        return "/".join(
            (self.project, self.configuration, self.task, self.test, self.measurement)
        )

    @classmethod
    def from_canonical(cls, text: str) -> "MetricKey":
        parts = text.split("/")
        if len(parts) != 5:
            raise ValidationError(
                f"metric key must have 5 '/'-separated components, got {text!r}"
            )
        return cls(*parts)


@dataclass(frozen=True)
class TestRun:
    __test__ = False  # domain type, not a pytest class

    run_id: str
    project: str
    configuration: str
    task: str
    revision: str
    order: int
    commit_date: datetime
    executed_at: datetime
    suppressed: bool = False
    rerun_index: int = 0

    def __post_init__(self):
        if self.rerun_index < 0:
            raise ValidationError("rerun_index must be >= 0")


@dataclass(frozen=True)
class RawEvent:
    run_id: str
    test: str
    op_index: int
    duration_ns: float
    worker: int

    def __post_init__(self):
        if not math.isfinite(self.duration_ns) or self.duration_ns < 0:
            raise ValidationError(
                f"invalid duration {self.duration_ns} for op {self.op_index}"
            )


@dataclass(frozen=True)
class MeasurementValue:
    key: MetricKey
    run_id: str
    value: float
    source: Source
    is_canary: bool
    calculated_on: datetime
    aggregation_version: str | None = None


@dataclass(frozen=True)
class SeriesPoint:
    order: int
    revision: str
    commit_date: datetime
    value: float
    run_id: str
    suppressed: bool = False


@dataclass(frozen=True)
class Series:
    key: MetricKey
    points: list[SeriesPoint] = field(default_factory=list)

    def values(self) -> list[float]:
        return [p.value for p in self.points]


@dataclass
class Ticket:
    ticket_id: str
    summary: str
    root_cause: RootCause = RootCause.UNLABELED
    resolution: Resolution = Resolution.OPEN
    created_at: datetime = field(default_factory=utcnow)
    resolved_at: datetime | None = None


@dataclass(frozen=True)
class StoreConfig:
    """Knobs for raw-event aggregation and canary classification."""

    percentiles: tuple[float, ...] = (50.0, 95.0, 99.0)
    nominal_run_duration_s: float = 60.0
    canary_test_pattern: str = r"^canary"


def percentile_measurement_name(p: float) -> str:
    return f"Latency{format(p, 'g')}thPercentile"


_SCHEMA = """
CREATE TABLE IF NOT EXISTS runs (
    run_id TEXT PRIMARY KEY,
    project TEXT NOT NULL, configuration TEXT NOT NULL, task TEXT NOT NULL,
    revision TEXT NOT NULL, order_num INTEGER NOT NULL,
    commit_date TEXT NOT NULL, executed_at TEXT NOT NULL,
    suppressed INTEGER NOT NULL DEFAULT 0,
    rerun_index INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS raw_events (
    run_id TEXT NOT NULL, test TEXT NOT NULL,
    op_index INTEGER NOT NULL, duration_ns REAL NOT NULL, worker INTEGER NOT NULL,
    UNIQUE (run_id, test, worker, op_index)
);
CREATE TABLE IF NOT EXISTS measurements (
    project TEXT NOT NULL, configuration TEXT NOT NULL, task TEXT NOT NULL,
    test TEXT NOT NULL, measurement TEXT NOT NULL, run_id TEXT NOT NULL,
    value REAL NOT NULL, source TEXT NOT NULL, is_canary INTEGER NOT NULL,
    calculated_on TEXT NOT NULL, aggregation_version TEXT,
    UNIQUE (project, configuration, task, test, measurement, run_id)
);
CREATE TABLE IF NOT EXISTS change_points (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    project TEXT NOT NULL, configuration TEXT NOT NULL, task TEXT NOT NULL,
    test TEXT NOT NULL, measurement TEXT NOT NULL,
    order_index INTEGER NOT NULL, revision TEXT NOT NULL,
    commit_date TEXT NOT NULL, calculated_on TEXT NOT NULL,
    qhat REAL NOT NULL, p_value REAL NOT NULL,
    before_json TEXT NOT NULL, after_json TEXT NOT NULL,
    is_canary INTEGER NOT NULL DEFAULT 0,
    triage_state TEXT NOT NULL DEFAULT 'UNTRIAGED',
    ticket_id TEXT, version INTEGER NOT NULL DEFAULT 1,
    UNIQUE (project, configuration, task, test, measurement, order_index)
);
CREATE TABLE IF NOT EXISTS tickets (
    ticket_id TEXT PRIMARY KEY, summary TEXT NOT NULL,
    root_cause TEXT NOT NULL, resolution TEXT NOT NULL,
    created_at TEXT NOT NULL, resolved_at TEXT
);
CREATE TABLE IF NOT EXISTS mutes (
    mute_id INTEGER PRIMARY KEY AUTOINCREMENT,
    key_pattern TEXT NOT NULL,
    order_start INTEGER, order_end INTEGER,
    created_by TEXT NOT NULL, reason TEXT NOT NULL,
    active INTEGER NOT NULL DEFAULT 1, created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS canary_decisions (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    task_run_id TEXT NOT NULL, verdict TEXT NOT NULL,
    triggering_keys TEXT NOT NULL, decided_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS outlier_reports (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    key TEXT NOT NULL, task_run_id TEXT NOT NULL,
    report TEXT NOT NULL, computed_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS reschedule_queue (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    task_run_id TEXT NOT NULL, reason TEXT NOT NULL,
    rerun_index INTEGER NOT NULL, decided_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS audit_log (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    actor TEXT NOT NULL, action TEXT NOT NULL,
    targets TEXT NOT NULL, payload TEXT NOT NULL, at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS counters (name TEXT PRIMARY KEY, value INTEGER NOT NULL);
"""


class ResultStore:
    """sqlite-backed store for runs, events, measurements and triage state."""

    def __init__(self, path: str | Path = ":memory:", config: StoreConfig | None = None):
        self.path = str(path)
        self.config = config or StoreConfig()
        self._canary_re = re.compile(self.config.canary_test_pattern)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "ResultStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def is_canary_test(self, test: str) -> bool:
        return bool(self._canary_re.search(test))

    # -- runs -----------------------------------------------------------------

    def upsert_run(self, run: TestRun) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT INTO runs (run_id, project, configuration, task, revision,
                       order_num, commit_date, executed_at, suppressed, rerun_index)
                   VALUES (?,?,?,?,?,?,?,?,?,?)
                   ON CONFLICT(run_id) DO UPDATE SET
                       suppressed=excluded.suppressed, rerun_index=excluded.rerun_index""",
                (
                    run.run_id, run.project, run.configuration, run.task,
                    run.revision, run.order, format_ts(run.commit_date),
                    format_ts(run.executed_at), int(run.suppressed), run.rerun_index,
                ),
            )

    def get_run(self, run_id: str) -> TestRun:
        row = self._conn.execute(
            "SELECT * FROM runs WHERE run_id = ?", (run_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown run_id {run_id!r}")
        return self._row_to_run(row)

    @staticmethod
    def _row_to_run(row: sqlite3.Row) -> TestRun:
        return TestRun(
            run_id=row["run_id"], project=row["project"],
            configuration=row["configuration"], task=row["task"],
            revision=row["revision"], order=row["order_num"],
            commit_date=parse_ts(row["commit_date"]),
            executed_at=parse_ts(row["executed_at"]),
            suppressed=bool(row["suppressed"]), rerun_index=row["rerun_index"],
        )

    def suppress_run(self, run_id: str) -> None:
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE runs SET suppressed = 1 WHERE run_id = ?", (run_id,)
            )
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown run_id {run_id!r}")

    # -- ingestion ------------------------------------------------------------

    def ingest_raw(
        self,
        run: TestRun,
        events: list[RawEvent],
        run_duration_s: float | None = None,
    ) -> list[MeasurementValue]:
        """Persist raw events and derive per-test measurements.

        Emits Throughput (events per second over the nominal run duration),
        AverageLatency and the configured latency percentiles, all marked
        RAW_DERIVED. The whole batch is rejected on any invalid event.
        """
        if not events:
            raise ValidationError("ingest_raw requires at least one event")
        for ev in events:
            if ev.run_id != run.run_id:
                raise NotFoundError(
                    f"event references run_id {ev.run_id!r}, expected {run.run_id!r}"
                )
        self.upsert_run(run)
        with self._lock, self._conn:
            try:
                self._conn.executemany(
                    "INSERT INTO raw_events (run_id, test, op_index, duration_ns, worker)"
                    " VALUES (?,?,?,?,?)",
                    [
                        (ev.run_id, ev.test, ev.op_index, ev.duration_ns, ev.worker)
                        for ev in events
                    ],
                )
            except sqlite3.IntegrityError as exc:
                raise ConflictError(f"duplicate raw event in batch: {exc}") from exc
        return self._aggregate_run(run, run_duration_s=run_duration_s)

    def _aggregate_run(
        self,
        run: TestRun,
        percentiles: tuple[float, ...] | None = None,
        run_duration_s: float | None = None,
        replace_existing: bool = True,
    ) -> list[MeasurementValue]:
        rows = self._conn.execute(
            "SELECT test, duration_ns FROM raw_events WHERE run_id = ?"
            " ORDER BY test, worker, op_index",
            (run.run_id,),
        ).fetchall()
        duration_s = run_duration_s or self.config.nominal_run_duration_s
        ps = self.config.percentiles if percentiles is None else percentiles
        by_test: dict[str, list[float]] = {}
        for row in rows:
            by_test.setdefault(row["test"], []).append(row["duration_ns"])
        out: list[MeasurementValue] = []
        now = utcnow()
        for test, durations in by_test.items():
            stats = describe(durations)
            measurements = {
                "Throughput": stats.n / duration_s,
                "AverageLatency": stats.mean,
            }
            for p in ps:
                measurements[percentile_measurement_name(p)] = percentile(durations, p)
            for name, value in measurements.items():
                key = MetricKey(run.project, run.configuration, run.task, test, name)
                out.append(
                    MeasurementValue(
                        key=key, run_id=run.run_id, value=value,
                        source=Source.RAW_DERIVED,
                        is_canary=self.is_canary_test(test),
                        calculated_on=now,
                        aggregation_version=AGGREGATION_VERSION,
                    )
                )
        self._store_measurements(out, replace_existing=replace_existing)
        return out

    def ingest_preaggregated(
        self, run: TestRun, values: list[tuple[MetricKey, float]]
    ) -> list[MeasurementValue]:
        """Persist externally computed statistics; no raw events are stored."""
        seen: set[MetricKey] = set()
        for key, value in values:
            if key in seen:
                raise ConflictError(f"duplicate key in batch: {key.canonical()}")
            seen.add(key)
            if not math.isfinite(value):
                raise ValidationError(
                    f"non-finite value for {key.canonical()}: {value}"
                )
        self.upsert_run(run)
        now = utcnow()
        out = [
            MeasurementValue(
                key=key, run_id=run.run_id, value=float(value),
                source=Source.PRE_AGGREGATED,
                is_canary=self.is_canary_test(key.test),
                calculated_on=now,
            )
            for key, value in values
        ]
        self._store_measurements(out, replace_existing=False)
        return out

    def _store_measurements(
        self, values: list[MeasurementValue], replace_existing: bool
    ) -> None:
        verb = "INSERT OR REPLACE" if replace_existing else "INSERT"
        with self._lock, self._conn:
            try:
                self._conn.executemany(
                    f"""{verb} INTO measurements
                        (project, configuration, task, test, measurement, run_id,
                         value, source, is_canary, calculated_on, aggregation_version)
                        VALUES (?,?,?,?,?,?,?,?,?,?,?)""",
                    [
                        (
                            m.key.project, m.key.configuration, m.key.task,
                            m.key.test, m.key.measurement, m.run_id, m.value,
                            m.source.value, int(m.is_canary),
                            format_ts(m.calculated_on), m.aggregation_version,
                        )
                        for m in values
                    ],
                )
            except sqlite3.IntegrityError as exc:
                raise ConflictError(f"measurement already stored: {exc}") from exc

    def recompute_statistics(
        self, key_filter: str | None, new_percentile: float
    ) -> int:
        """Add a latency percentile series over stored raw events.

        Runs whose matched measurements are all PRE_AGGREGATED cannot be
        recomputed and raise. Existing measurements are left untouched;
        recomputing an existing percentile is idempotent.
        """
        if not 0.0 < new_percentile < 100.0:
            raise ValidationError("percentile must be in (0, 100)")
        pattern = re.compile(key_filter) if key_filter else None
        scopes: dict[tuple[str, str, str, str], set[str]] = {}
        for row in self._conn.execute(
            "SELECT DISTINCT project, configuration, task, test, run_id, source"
            " FROM measurements"
        ):
            key4 = (row["project"], row["configuration"], row["task"], row["test"])
            if pattern and not pattern.search("/".join(key4)):
                continue
            scopes.setdefault(key4, set()).add(row["source"])
        if not scopes:
            raise NotFoundError("no measurements match the key filter")
        raw_only = {
            key4 for key4, sources in scopes.items() if Source.RAW_DERIVED.value in sources
        }
        missing = sorted(set(scopes) - raw_only)
        if missing:
            raise ValidationError(
                "cannot recompute from pre-aggregated data for: "
                + ", ".join("/".join(k) for k in missing)
            )
        name = percentile_measurement_name(new_percentile)
        now = utcnow()
        added: list[MeasurementValue] = []
        for project, configuration, task, test in sorted(raw_only):
            rows = self._conn.execute(
                """SELECT e.run_id, e.duration_ns FROM raw_events e
                   JOIN runs r ON r.run_id = e.run_id
                   WHERE e.test = ? AND r.project = ? AND r.configuration = ? AND r.task = ?
                   ORDER BY e.run_id, e.test, e.worker, e.op_index""",
                (test, project, configuration, task),
            ).fetchall()
            by_run: dict[str, list[float]] = {}
            for row in rows:
                by_run.setdefault(row["run_id"], []).append(row["duration_ns"])
            key = MetricKey(project, configuration, task, test, name)
            for run_id, durations in by_run.items():
                added.append(
                    MeasurementValue(
                        key=key, run_id=run_id,
                        value=percentile(durations, new_percentile),
                        source=Source.RAW_DERIVED,
                        is_canary=self.is_canary_test(test),
                        calculated_on=now,
                        aggregation_version=AGGREGATION_VERSION,
                    )
                )
        self._store_measurements(added, replace_existing=True)
        return len(added)

    def reaggregate_run(self, run_id: str) -> list[MeasurementValue]:
        """Delete this run's RAW_DERIVED measurements and rebuild them."""
        run = self.get_run(run_id)
        with self._lock, self._conn:
            self._conn.execute(
                "DELETE FROM measurements WHERE run_id = ? AND source = ?",
                (run_id, Source.RAW_DERIVED.value),
            )
        return self._aggregate_run(run)

    # -- series ---------------------------------------------------------------

    def list_keys(self, pattern: str | None = None) -> list[MetricKey]:
        keys = [
            MetricKey(
                row["project"], row["configuration"], row["task"],
                row["test"], row["measurement"],
            )
            for row in self._conn.execute(
                "SELECT DISTINCT project, configuration, task, test, measurement"
                " FROM measurements"
            )
        ]
        if pattern:
            rx = re.compile(pattern)
            keys = [k for k in keys if rx.search(k.canonical())]
        return sorted(keys)

    def measurements_for_test(
        self, project: str, configuration: str, task: str, test: str
    ) -> list[str]:
        return [
            row["measurement"]
            for row in self._conn.execute(
                """SELECT DISTINCT measurement FROM measurements
                   WHERE project=? AND configuration=? AND task=? AND test=?
                   ORDER BY measurement""",
                (project, configuration, task, test),
            )
        ]

    def get_series(self, key: MetricKey, include_suppressed: bool = False) -> Series:
        """Ordered series for a key: last non-suppressed run per revision.

        With include_suppressed, every stored run's point is returned (a
        superset of the default view). Unknown keys raise.
        """
        rows = self._conn.execute(
            """SELECT m.value, m.run_id, r.revision, r.order_num, r.commit_date,
                      r.suppressed, r.rerun_index
               FROM measurements m JOIN runs r ON r.run_id = m.run_id
               WHERE m.project=? AND m.configuration=? AND m.task=?
                 AND m.test=? AND m.measurement=?
               ORDER BY r.order_num, r.rerun_index""",
            (key.project, key.configuration, key.task, key.test, key.measurement),
        ).fetchall()
        if not rows:
            raise NotFoundError(f"unknown metric key {key.canonical()}")
        points: list[SeriesPoint] = []
        if include_suppressed:
            for row in rows:
                points.append(self._row_to_point(row))
        else:
            last_per_rev: dict[tuple[int, str], sqlite3.Row] = {}
            for row in rows:
                if row["suppressed"]:
                    continue
                last_per_rev[(row["order_num"], row["revision"])] = row
            points = [
                self._row_to_point(row)
                for _, row in sorted(last_per_rev.items(), key=lambda kv: kv[0][0])
            ]
        return Series(key=key, points=points)

    @staticmethod
    def _row_to_point(row: sqlite3.Row) -> SeriesPoint:
        return SeriesPoint(
            order=row["order_num"], revision=row["revision"],
            commit_date=parse_ts(row["commit_date"]), value=row["value"],
            run_id=row["run_id"], suppressed=bool(row["suppressed"]),
        )

    def is_canary_key(self, key: MetricKey) -> bool:
        return self.is_canary_test(key.test)

    def canary_keys_for(self, project: str, configuration: str) -> list[MetricKey]:
        return [
            k for k in self.list_keys()
            if k.project == project and k.configuration == configuration
            and self.is_canary_key(k)
        ]

    def revisions(self, project: str | None = None) -> list[tuple[int, str]]:
        query = "SELECT DISTINCT order_num, revision FROM runs"
        args: tuple = ()
        if project:
            query += " WHERE project = ?"
            args = (project,)
        return [
            (row["order_num"], row["revision"])
            for row in self._conn.execute(query + " ORDER BY order_num", args)
        ]

    # -- tickets --------------------------------------------------------------

    def next_ticket_id(self) -> str:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO counters (name, value) VALUES ('ticket', 0)"
                " ON CONFLICT(name) DO UPDATE SET value = value + 1"
            )
            row = self._conn.execute(
                "SELECT value FROM counters WHERE name = 'ticket'"
            ).fetchone()
        return f"PERF-{row['value'] + 1}"

    def insert_ticket(self, ticket: Ticket) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO tickets VALUES (?,?,?,?,?,?)",
                (
                    ticket.ticket_id, ticket.summary, ticket.root_cause.value,
                    ticket.resolution.value, format_ts(ticket.created_at),
                    format_ts(ticket.resolved_at) if ticket.resolved_at else None,
                ),
            )

    def get_ticket(self, ticket_id: str) -> Ticket:
        row = self._conn.execute(
            "SELECT * FROM tickets WHERE ticket_id = ?", (ticket_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown ticket {ticket_id!r}")
        return Ticket(
            ticket_id=row["ticket_id"], summary=row["summary"],
            root_cause=RootCause(row["root_cause"]),
            resolution=Resolution(row["resolution"]),
            created_at=parse_ts(row["created_at"]),
            resolved_at=parse_ts(row["resolved_at"]) if row["resolved_at"] else None,
        )

    def update_ticket(self, ticket: Ticket) -> None:
        with self._lock, self._conn:
            cur = self._conn.execute(
                """UPDATE tickets SET summary=?, root_cause=?, resolution=?, resolved_at=?
                   WHERE ticket_id=?""",
                (
                    ticket.summary, ticket.root_cause.value, ticket.resolution.value,
                    format_ts(ticket.resolved_at) if ticket.resolved_at else None,
                    ticket.ticket_id,
                ),
            )
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown ticket {ticket.ticket_id!r}")

    def list_tickets(self) -> list[Ticket]:
        return [
            self.get_ticket(row["ticket_id"])
            for row in self._conn.execute("SELECT ticket_id FROM tickets ORDER BY created_at")
        ]

    # -- audit ----------------------------------------------------------------

    def append_audit(
        self, actor: str, action: str, targets: list, payload: dict, at: datetime
    ) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO audit_log (actor, action, targets, payload, at)"
                " VALUES (?,?,?,?,?)",
                (actor, action, json.dumps(targets), json.dumps(payload), format_ts(at)),
            )

    def audit_entries(self) -> list[sqlite3.Row]:
        return self._conn.execute("SELECT * FROM audit_log ORDER BY id").fetchall()


# -- NDJSON ingestion records -------------------------------------------------


def parse_raw_event_line(text: str) -> RawEvent:
    obj = json.loads(text)
    if set(obj) != set(RAW_EVENT_FIELDS):
        raise ValidationError(
            f"raw event record must have fields {RAW_EVENT_FIELDS}, got {sorted(obj)}"
        )
    return RawEvent(
        run_id=str(obj["run_id"]), test=str(obj["test"]),
        op_index=int(obj["op_index"]), duration_ns=float(obj["duration_ns"]),
        worker=int(obj["worker"]),
    )


def parse_preaggregated_line(text: str) -> tuple[MetricKey, str, float]:
    obj = json.loads(text)
    if set(obj) != set(PREAGG_FIELDS):
        raise ValidationError(
            f"pre-aggregated record must have fields {PREAGG_FIELDS}, got {sorted(obj)}"
        )
    key = MetricKey(
        project=str(obj["project"]), configuration=str(obj["configuration"]),
        task=str(obj["task"]), test=str(obj["test"]),
        measurement=str(obj["measurement"]),
    )
    return key, str(obj["run_id"]), float(obj["value"])


def run_from_dict(obj: dict) -> TestRun:
    return TestRun(
        run_id=str(obj["run_id"]), project=str(obj["project"]),
        configuration=str(obj["configuration"]), task=str(obj["task"]),
        revision=str(obj["revision"]), order=int(obj["order"]),
        commit_date=parse_ts(obj["commit_date"]),
        executed_at=parse_ts(obj["executed_at"]),
        suppressed=bool(obj.get("suppressed", False)),
        rerun_index=int(obj.get("rerun_index", 0)),
    )


def run_to_dict(run: TestRun) -> dict:
    return {
        "run_id": run.run_id, "project": run.project,
        "configuration": run.configuration, "task": run.task,
        "revision": run.revision, "order": run.order,
        "commit_date": format_ts(run.commit_date),
        "executed_at": format_ts(run.executed_at),
        "suppressed": run.suppressed, "rerun_index": run.rerun_index,
    }
