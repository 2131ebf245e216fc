"""Human triage workflow over detected change points.

Change points are grouped by commit revision into one actionable line;
state transitions are atomic over a whole target set and append to an
audit log. Tickets are local records labeled with a root cause and a
resolution, feeding the summary report.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from .changepoint import ChangePoint, TriageState, _row_to_change_point
from .errors import (
    IllegalTransitionError,
    NotFoundError,
    ValidationError,
    VersionConflictError,
)
from .model import Resolution, ResultStore, RootCause, Ticket, utcnow

__all__ = [
    "TriageGroup",
    "TriageAction",
    "ActionKind",
    "list_groups",
    "transition",
    "label_ticket",
    "summary_report",
]


class ActionKind(str, Enum):
    ACKNOWLEDGE = "ACKNOWLEDGE"
    HIDE = "HIDE"
    CREATE_TICKET = "CREATE_TICKET"
    LINK_TICKET = "LINK_TICKET"
    LABEL_ROOT_CAUSE = "LABEL_ROOT_CAUSE"


_TARGET_STATE = {
    ActionKind.ACKNOWLEDGE: TriageState.ACKNOWLEDGED,
    ActionKind.HIDE: TriageState.HIDDEN,
    ActionKind.CREATE_TICKET: TriageState.TICKETED,
    ActionKind.LINK_TICKET: TriageState.TICKETED,
}

_LEGAL = {
    TriageState.UNTRIAGED: {
        TriageState.ACKNOWLEDGED, TriageState.HIDDEN, TriageState.TICKETED,
    },
    TriageState.ACKNOWLEDGED: {TriageState.TICKETED},
    TriageState.HIDDEN: set(),
    TriageState.TICKETED: set(),
}


@dataclass(frozen=True)
class TriageGroup:
    revision: str
    commit_date: datetime
    change_points: list[ChangePoint]
    state_summary: dict[str, int]


@dataclass(frozen=True)
class TriageAction:
    actor: str
    targets: list[int]  # change point ids
    action: ActionKind
    payload: dict = field(default_factory=dict)
    at: datetime = field(default_factory=utcnow)


def _load_change_points(store: ResultStore, where: str = "", args: tuple = ()) -> list[ChangePoint]:
    rows = store._conn.execute(
        f"SELECT * FROM change_points {where} ORDER BY order_index", args
    ).fetchall()
    return [_row_to_change_point(row) for row in rows]


def list_groups(
    store: ResultStore,
    measurement_regex: str | None = None,
    triage_state: TriageState | None = None,
    date_range: tuple[datetime, datetime] | None = None,
    calculated_on_range: tuple[datetime, datetime] | None = None,
    include_canaries: bool = False,
) -> list[TriageGroup]:
    """Change points grouped by revision, newest commit first.

    The measurement regex is matched against the measurement component
    only; canary metrics stay hidden unless explicitly requested.
    """
    if measurement_regex is not None:
        try:
            rx = re.compile(measurement_regex)
        except re.error as exc:
            raise ValidationError(
                f"invalid measurement regex at position {exc.pos}: {exc.msg}"
            ) from exc
    else:
        rx = None
    cps = _load_change_points(store)
    selected = []
    for cp in cps:
        if not include_canaries and store.is_canary_key(cp.key):
            continue
        if rx is not None and not rx.search(cp.key.measurement):
            continue
        if triage_state is not None and cp.triage_state is not triage_state:
            continue
        if date_range is not None and not (date_range[0] <= cp.commit_date < date_range[1]):
            continue
        if calculated_on_range is not None and not (
            calculated_on_range[0] <= cp.calculated_on < calculated_on_range[1]
        ):
            continue
        selected.append(cp)
    by_revision: dict[str, list[ChangePoint]] = {}
    for cp in selected:
        by_revision.setdefault(cp.revision, []).append(cp)
    groups = []
    for revision, members in by_revision.items():
        summary: dict[str, int] = {}
        for cp in members:
            summary[cp.triage_state.value] = summary.get(cp.triage_state.value, 0) + 1
        groups.append(
            TriageGroup(
                revision=revision,
                commit_date=min(cp.commit_date for cp in members),
                change_points=sorted(members, key=lambda c: c.key),
                state_summary=summary,
            )
        )
    groups.sort(key=lambda g: g.commit_date, reverse=True)
    return groups


def _get_cp_rows(store: ResultStore, ids: list[int]):
    rows = []
    for cp_id in ids:
        row = store._conn.execute(
            "SELECT * FROM change_points WHERE id = ?", (cp_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown change point id {cp_id}")
        rows.append(row)
    return rows


def transition(store: ResultStore, action: TriageAction) -> list[ChangePoint]:
    """Apply one triage action to every target atomically.

    Validation happens before any write: an illegal transition or a stale
    version leaves every target untouched. CREATE_TICKET opens one ticket
    for the whole set; LINK_TICKET attaches an existing one.
    """
    if not action.targets:
        raise ValidationError("transition requires at least one target")
    if action.action is ActionKind.LABEL_ROOT_CAUSE:
        raise ValidationError("LABEL_ROOT_CAUSE applies to tickets; use label_ticket")
    target_state = _TARGET_STATE[action.action]
    rows = _get_cp_rows(store, action.targets)
    expected_versions = action.payload.get("expected_versions") or {}
    for row in rows:
        current = TriageState(row["triage_state"])
        if target_state not in _LEGAL[current]:
            raise IllegalTransitionError(
                f"change point {row['id']} is {current.value}; "
                f"cannot move to {target_state.value}"
            )
        want = expected_versions.get(str(row["id"]), expected_versions.get(row["id"]))
        if want is not None and int(want) != row["version"]:
            raise VersionConflictError(
                f"change point {row['id']} is at version {row['version']}, "
                f"caller expected {want}"
            )

    ticket_id: str | None = None
    if action.action is ActionKind.CREATE_TICKET:
        ticket_id = store.next_ticket_id()
    elif action.action is ActionKind.LINK_TICKET:
        ticket_id = action.payload.get("ticket_id")
        if not ticket_id:
            raise ValidationError("LINK_TICKET requires payload.ticket_id")
        store.get_ticket(ticket_id)  # must exist

    with store._lock, store._conn:
        if action.action is ActionKind.CREATE_TICKET:
            summary = action.payload.get(
                "summary", f"Performance change at {rows[0]['revision']}"
            )
            store.insert_ticket(
                Ticket(ticket_id=ticket_id, summary=summary, created_at=action.at)
            )
        for row in rows:
            store._conn.execute(
                """UPDATE change_points
                   SET triage_state = ?, ticket_id = COALESCE(?, ticket_id),
                       version = version + 1
                   WHERE id = ?""",
                (target_state.value, ticket_id, row["id"]),
            )
    store.append_audit(
        actor=action.actor, action=action.action.value,
        targets=list(action.targets),
        payload={k: v for k, v in action.payload.items() if k != "expected_versions"},
        at=action.at,
    )
    updated = _get_cp_rows(store, action.targets)
    return [_row_to_change_point(row) for row in updated]


def label_ticket(
    store: ResultStore,
    ticket_id: str,
    root_cause: RootCause | None = None,
    resolution: Resolution | None = None,
    actor: str = "system",
) -> Ticket:
    """Relabel a ticket; resolved_at tracks leaving (or re-entering) OPEN."""
    ticket = store.get_ticket(ticket_id)
    if root_cause is not None:
        ticket.root_cause = root_cause
    if resolution is not None:
        ticket.resolution = resolution
        ticket.resolved_at = None if resolution is Resolution.OPEN else utcnow()
    store.update_ticket(ticket)
    store.append_audit(
        actor=actor, action=ActionKind.LABEL_ROOT_CAUSE.value, targets=[ticket_id],
        payload={
            "root_cause": ticket.root_cause.value,
            "resolution": ticket.resolution.value,
        },
        at=utcnow(),
    )
    return ticket


def summary_report(store: ResultStore, start: datetime, end: datetime) -> dict:
    """Ticket statistics over [start, end): volume, quality, outcomes."""
    if end <= start:
        return {
            "period_days": 0.0, "total_tickets": 0, "resolved_tickets": 0,
            "percent_resolved": 0.0, "tickets_per_day": 0.0,
            "root_cause_percent": {}, "improvements": 0, "regressions": 0,
            "days_per_improvement": None, "days_per_regression": None,
        }
    tickets = [t for t in store.list_tickets() if start <= t.created_at < end]
    days = (end - start).total_seconds() / 86_400.0
    total = len(tickets)
    resolved = sum(1 for t in tickets if t.resolution is not Resolution.OPEN)
    causes: dict[str, int] = {}
    for t in tickets:
        causes[t.root_cause.value] = causes.get(t.root_cause.value, 0) + 1
    improvements = sum(1 for t in tickets if t.resolution is Resolution.IMPROVEMENT)
    regressions = sum(
        1 for t in tickets if t.resolution is Resolution.REGRESSION_ACCEPTED
    )
    return {
        "period_days": days,
        "total_tickets": total,
        "resolved_tickets": resolved,
        "percent_resolved": 100.0 * resolved / total if total else 0.0,
        "tickets_per_day": total / days,
        "root_cause_percent": {
            cause: 100.0 * count / total for cause, count in sorted(causes.items())
        },
        "improvements": improvements,
        "regressions": regressions,
        "days_per_improvement": days / improvements if improvements else None,
        "days_per_regression": days / regressions if regressions else None,
    }
