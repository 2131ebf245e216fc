"""HTTP service over the store: the one boundary the UI and CLI consume.

All endpoints live under /api/v1 and speak JSON (the comparison endpoint
can also return the exact CSV bytes). State is entirely in the store;
handlers are stateless between requests.
"""

from __future__ import annotations

import os
from datetime import datetime
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import changepoint as cpd
from . import compare as cmp
from . import triage
from .canarypolicy import CanaryPolicy, Mute, PolicyConfig
from .changepoint import ChangePoint, CpdParams, StableRegion, TriageState
from .errors import (
    ConflictError,
    IllegalTransitionError,
    NotFoundError,
    PerfbaronError,
    ValidationError,
)
from .model import (
    MetricKey,
    Resolution,
    ResultStore,
    RootCause,
    Ticket,
    format_ts,
    parse_ts,
    run_from_dict,
    run_to_dict,
)
from .outlier import GesdParams

DB_ENV_VAR = "PERFBARON_DB"
TOKEN_ENV_VAR = "PERFBARON_TOKEN"

_ERROR_STATUS = {
    "NOT_FOUND": 404,
    "CONFLICT": 409,
    "VALIDATION": 400,
    "ILLEGAL_TRANSITION": 409,
    "INTERNAL": 500,
}


def _error_code(exc: Exception) -> str:
    if isinstance(exc, NotFoundError):
        return "NOT_FOUND"
    if isinstance(exc, IllegalTransitionError):
        return "ILLEGAL_TRANSITION"
    if isinstance(exc, ConflictError):
        return "CONFLICT"
    if isinstance(exc, ValidationError):
        return "VALIDATION"
    return "INTERNAL"


# -- request bodies ------------------------------------------------------------


class RunBody(BaseModel):
    run_id: str
    project: str
    configuration: str
    task: str
    revision: str
    order: int
    commit_date: str
    executed_at: str
    suppressed: bool = False
    rerun_index: int = 0


class RawEventBody(BaseModel):
    run_id: str
    test: str
    op_index: int
    duration_ns: float
    worker: int


class RawResultsBody(BaseModel):
    run: RunBody
    events: list[RawEventBody]
    run_duration_s: float | None = None


class PreAggValueBody(BaseModel):
    project: str
    configuration: str
    task: str
    test: str
    measurement: str
    run_id: str
    value: float


class PreAggResultsBody(BaseModel):
    run: RunBody
    values: list[PreAggValueBody]


class DetectBody(BaseModel):
    key_filter: str | None = None
    alpha_exponent: float = 1.0
    significance: float = 0.05
    permutations: int = 200
    min_segment: int = 5
    rng_seed: int = 0


class TransitionBody(BaseModel):
    actor: str
    targets: list[int]
    action: str
    payload: dict = Field(default_factory=dict)


class TicketBody(BaseModel):
    summary: str


class TicketPatchBody(BaseModel):
    root_cause: str | None = None
    resolution: str | None = None
    actor: str = "api"


class MuteBody(BaseModel):
    key_pattern: str
    created_by: str
    reason: str
    order_start: int | None = None
    order_end: int | None = None


class EvaluateBody(BaseModel):
    task_run_id: str
    enabled: bool = False
    max_reruns: int = 3
    gesd_max_outliers: int = 10
    gesd_significance: float = 0.05
    gesd_window: int = 100


# -- payload shaping ------------------------------------------------------------


def key_payload(key: MetricKey) -> dict:
    return {
        "project": key.project, "configuration": key.configuration,
        "task": key.task, "test": key.test, "measurement": key.measurement,
        "canonical": key.canonical(),
    }


def region_payload(region: StableRegion) -> dict:
    return {
        "start": region.start, "end": region.end,
        "n": region.stats.n, "mean": region.stats.mean,
        "variance": region.stats.variance,
        "min": region.stats.min, "max": region.stats.max,
    }


def change_point_payload(cp: ChangePoint, is_canary: bool) -> dict:
    return {
        "id": cp.id,
        "key": key_payload(cp.key),
        "order_index": cp.order_index,
        "revision": cp.revision,
        "commit_date": format_ts(cp.commit_date),
        "calculated_on": format_ts(cp.calculated_on),
        "qhat": cp.qhat,
        "p_value": cp.p_value,
        "before": region_payload(cp.before),
        "after": region_payload(cp.after),
        "triage_state": cp.triage_state.value,
        "ticket_id": cp.ticket_id,
        "version": cp.version,
        "is_canary": is_canary,
    }


def row_payload(row: cmp.ComparisonRow) -> dict:
    return {
        "key": key_payload(row.key),
        "base_mean": row.base.mean, "cand_mean": row.cand.mean,
        "base_n": row.base.n, "cand_n": row.cand.n,
        "ratio": row.ratio, "percent_change": row.percent_change,
        "deviation": row.deviation,
        "zero_variance": row.zero_variance, "zero_mean": row.zero_mean,
        "welch_p": row.welch.p_value if row.welch else None,
        "mw_p": row.mann_whitney_p,
    }


def ticket_payload(ticket: Ticket) -> dict:
    return {
        "ticket_id": ticket.ticket_id, "summary": ticket.summary,
        "root_cause": ticket.root_cause.value,
        "resolution": ticket.resolution.value,
        "created_at": format_ts(ticket.created_at),
        "resolved_at": format_ts(ticket.resolved_at) if ticket.resolved_at else None,
    }


def _parse_key(text: str) -> MetricKey:
    return MetricKey.from_canonical(text)


def _range(start: str | None, end: str | None) -> tuple[datetime, datetime] | None:
    if start is None and end is None:
        return None
    if start is None or end is None:
        raise ValidationError("both ends of a date range are required")
    return parse_ts(start), parse_ts(end)


# -- app ------------------------------------------------------------------------


def create_app(
    db_path: str | None = None,
    store: ResultStore | None = None,
    token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    if store is None:
        store = ResultStore(db_path or os.environ.get(DB_ENV_VAR, "perfbaron.db"))
    if token is None:
        token = os.environ.get(TOKEN_ENV_VAR) or None

    app = FastAPI(title="perfbaron", version="0.1.0")
    app.state.store = store

    @app.exception_handler(PerfbaronError)
    async def domain_error_handler(request: Request, exc: PerfbaronError):
        code = _error_code(exc)
        return JSONResponse(
            status_code=_ERROR_STATUS[code],
            content={"code": code, "message": str(exc), "detail": type(exc).__name__},
        )

    @app.middleware("http")
    async def bearer_guard(request: Request, call_next):
        if token and request.url.path.startswith("/api/"):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse(
                    status_code=401,
                    content={
                        "code": "VALIDATION",
                        "message": "missing or invalid bearer token",
                        "detail": "authorization",
                    },
                )
        return await call_next(request)

    # -- ingestion ---------------------------------------------------------------

    @app.post("/api/v1/runs")
    def register_run(body: RunBody):
        run = run_from_dict(body.model_dump())
        store.upsert_run(run)
        return {"run": run_to_dict(run)}

    @app.post("/api/v1/results/raw")
    def ingest_raw(body: RawResultsBody):
        from .model import RawEvent

        run = run_from_dict(body.run.model_dump())
        events = [
            RawEvent(
                run_id=e.run_id, test=e.test, op_index=e.op_index,
                duration_ns=e.duration_ns, worker=e.worker,
            )
            for e in body.events
        ]
        out = store.ingest_raw(run, events, run_duration_s=body.run_duration_s)
        return {
            "stored_events": len(events),
            "measurements": [
                {"key": key_payload(m.key), "value": m.value} for m in out
            ],
        }

    @app.post("/api/v1/results")
    def ingest_preaggregated(body: PreAggResultsBody):
        run = run_from_dict(body.run.model_dump())
        values = []
        for v in body.values:
            if v.run_id != run.run_id:
                raise ValidationError(
                    f"value references run_id {v.run_id!r}, expected {run.run_id!r}"
                )
            key = MetricKey(v.project, v.configuration, v.task, v.test, v.measurement)
            values.append((key, v.value))
        out = store.ingest_preaggregated(run, values)
        return {"stored": len(out)}

    # -- series and trends ---------------------------------------------------------

    @app.get("/api/v1/series/{key:path}")
    def get_series(key: str, include_suppressed: bool = False):
        metric_key = _parse_key(key)
        series = store.get_series(metric_key, include_suppressed=include_suppressed)
        return {
            "key": key_payload(metric_key),
            "points": [
                {
                    "order": p.order, "revision": p.revision,
                    "commit_date": format_ts(p.commit_date),
                    "value": p.value, "run_id": p.run_id,
                    "suppressed": p.suppressed,
                }
                for p in series.points
            ],
        }

    @app.get("/api/v1/trend/{key:path}")
    def get_trend(key: str, measurement: str | None = None):
        parts = key.split("/")
        if len(parts) != 4:
            raise ValidationError(
                "trend key must be project/configuration/task/test"
            )
        project, configuration, task, test = parts
        available = store.measurements_for_test(project, configuration, task, test)
        if not available:
            raise NotFoundError(f"no measurements for test {key!r}")
        selected = measurement or available[0]
        if selected not in available:
            raise NotFoundError(f"measurement {selected!r} not available for {key!r}")
        metric_key = MetricKey(project, configuration, task, test, selected)
        series = store.get_series(metric_key)
        cps = cpd.store_change_points(store, metric_key)
        return {
            "key": key_payload(metric_key),
            "measurement": selected,
            "available_measurements": available,
            "points": [
                {
                    "order": p.order, "revision": p.revision,
                    "commit_date": format_ts(p.commit_date), "value": p.value,
                }
                for p in series.points
            ],
            "change_points": [
                {"order_index": cp.order_index, "revision": cp.revision,
                 "p_value": cp.p_value}
                for cp in cps
            ],
        }

    # -- detection ------------------------------------------------------------------

    @app.post("/api/v1/detect")
    def detect(body: DetectBody):
        params = CpdParams(
            alpha_exponent=body.alpha_exponent,
            significance=body.significance,
            permutations=body.permutations,
            min_segment=body.min_segment,
            rng_seed=body.rng_seed,
        )
        results = cpd.run_detection(store, params, key_filter=body.key_filter)
        return {
            "keys_analyzed": len(results),
            "change_points": {
                key.canonical(): len(cps) for key, cps in results.items()
            },
        }

    # -- triage ---------------------------------------------------------------------

    @app.get("/api/v1/changepoints")
    def list_changepoints(
        measurement_regex: str | None = None,
        state: str | None = None,
        group: str | None = None,
        include_canaries: bool = False,
        commit_start: str | None = None,
        commit_end: str | None = None,
        calculated_start: str | None = None,
        calculated_end: str | None = None,
    ):
        triage_state = TriageState(state) if state else None
        groups = triage.list_groups(
            store,
            measurement_regex=measurement_regex,
            triage_state=triage_state,
            date_range=_range(commit_start, commit_end),
            calculated_on_range=_range(calculated_start, calculated_end),
            include_canaries=include_canaries,
        )
        def member(cp):
            return change_point_payload(cp, store.is_canary_key(cp.key))

        if group == "revision":
            return {
                "groups": [
                    {
                        "revision": g.revision,
                        "commit_date": format_ts(g.commit_date),
                        "state_summary": g.state_summary,
                        "change_points": [member(cp) for cp in g.change_points],
                    }
                    for g in groups
                ]
            }
        return {
            "change_points": [
                member(cp) for g in groups for cp in g.change_points
            ]
        }

    @app.patch("/api/v1/changepoints:transition")
    def transition_changepoints(body: TransitionBody):
        try:
            kind = triage.ActionKind(body.action)
        except ValueError as exc:
            raise ValidationError(f"unknown action {body.action!r}") from exc
        updated = triage.transition(
            store,
            triage.TriageAction(
                actor=body.actor, targets=body.targets, action=kind,
                payload=body.payload,
            ),
        )
        return {
            "change_points": [
                change_point_payload(cp, store.is_canary_key(cp.key))
                for cp in updated
            ]
        }

    @app.post("/api/v1/tickets")
    def create_ticket(body: TicketBody):
        ticket = Ticket(ticket_id=store.next_ticket_id(), summary=body.summary)
        store.insert_ticket(ticket)
        return ticket_payload(ticket)

    @app.patch("/api/v1/tickets/{ticket_id}")
    def patch_ticket(ticket_id: str, body: TicketPatchBody):
        try:
            root_cause = RootCause(body.root_cause) if body.root_cause else None
            resolution = Resolution(body.resolution) if body.resolution else None
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        ticket = triage.label_ticket(
            store, ticket_id, root_cause=root_cause, resolution=resolution,
            actor=body.actor,
        )
        return ticket_payload(ticket)

    # -- comparison -------------------------------------------------------------------

    @app.get("/api/v1/compare")
    def compare(
        base: str,
        candidate: str,
        min_deviation: float = cmp.DEFAULT_MIN_DEVIATION,
        format: Literal["json", "csv"] = "json",
        key_filter: str | None = None,
    ):
        report = cmp.compare_revisions(store, base, candidate, key_filter=key_filter)
        report = cmp.filter_and_sort(report, min_deviation)
        if format == "csv":
            return Response(content=cmp.export_csv(report), media_type="text/csv")
        return {
            "base_revision": report.base_revision,
            "cand_revision": report.cand_revision,
            "min_deviation_filter": report.min_deviation_filter,
            "generated_at": format_ts(report.generated_at),
            "rows": [row_payload(row) for row in report.rows],
            "skipped": [key_payload(k) for k in report.skipped],
        }

    # -- canary policy -----------------------------------------------------------------

    @app.post("/api/v1/mutes")
    def create_mute(body: MuteBody):
        policy = CanaryPolicy(store)
        mute = policy.apply_mute(
            Mute(
                key_pattern=body.key_pattern, created_by=body.created_by,
                reason=body.reason, order_start=body.order_start,
                order_end=body.order_end,
            )
        )
        return {"mute_id": mute.mute_id, "key_pattern": mute.key_pattern}

    @app.get("/api/v1/mutes")
    def list_mutes(include_expired: bool = False):
        policy = CanaryPolicy(store)
        return {
            "mutes": [
                {
                    "mute_id": m.mute_id, "key_pattern": m.key_pattern,
                    "created_by": m.created_by, "reason": m.reason,
                    "order_start": m.order_start, "order_end": m.order_end,
                    "active": m.active,
                }
                for m in policy.list_mutes(include_expired=include_expired)
            ]
        }

    @app.delete("/api/v1/mutes/{mute_id}")
    def expire_mute(mute_id: int):
        CanaryPolicy(store).expire_mute(mute_id)
        return {"expired": mute_id}

    @app.post("/api/v1/canary/evaluate")
    def evaluate_canaries(body: EvaluateBody):
        policy = CanaryPolicy(
            store,
            PolicyConfig(
                enabled=body.enabled, max_reruns=body.max_reruns,
                gesd=GesdParams(
                    max_outliers=body.gesd_max_outliers,
                    significance=body.gesd_significance,
                    window=body.gesd_window,
                ),
            ),
        )
        decision = policy.evaluate(body.task_run_id)
        return {
            "task_run_id": decision.task_run_id,
            "verdict": decision.verdict.value,
            "triggering_keys": [k.canonical() for k in decision.triggering_keys],
            "decided_at": format_ts(decision.decided_at),
        }

    @app.get("/api/v1/canary/decisions")
    def canary_decisions():
        policy = CanaryPolicy(store)
        return {
            "decisions": [
                {
                    "task_run_id": d.task_run_id,
                    "verdict": d.verdict.value,
                    "triggering_keys": [k.canonical() for k in d.triggering_keys],
                    "decided_at": format_ts(d.decided_at),
                }
                for d in policy.decisions()
            ]
        }

    # -- reporting ---------------------------------------------------------------------

    @app.get("/api/v1/reports/summary")
    def reports_summary(start: str, end: str):
        return triage.summary_report(store, parse_ts(start), parse_ts(end))

    @app.get("/api/v1/revisions")
    def list_revisions(project: str | None = None):
        return {
            "revisions": [
                {"order": order, "revision": revision}
                for order, revision in store.revisions(project)
            ]
        }

    # -- static UI ---------------------------------------------------------------------

    ui = Path(ui_dir) if ui_dir else Path(__file__).resolve().parents[2] / "frontend" / "public"
    if ui.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

    return app


def serve(
    db_path: str | None = None,
    port: int = 8123,
    host: str = "127.0.0.1",
    token: str | None = None,
) -> None:
    import uvicorn

    app = create_app(db_path=db_path, token=token)
    uvicorn.run(app, host=host, port=port, log_level="info")
