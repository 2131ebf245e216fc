"""Arbitrary-revision comparison on stable-region statistics.

Each shared metric gets one row built from the stable regions the two
revisions sit in: mean ratio, percent change, and the change expressed in
baseline standard deviations. Presentation is a separate step (2-sigma
filter, sort by absolute percent change) so reports stay inspectable
before filtering.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import datetime

from .changepoint import StableRegion, region_before_revision
from .errors import NotFoundError
from .model import MetricKey, ResultStore, utcnow
from .stats import (
    DegenerateSamplesError,
    SampleStats,
    TestResult,
    mann_whitney_u,
    welch_t_test,
)

__all__ = [
    "ComparisonRow",
    "ComparisonReport",
    "build_row",
    "compare_revisions",
    "filter_and_sort",
    "export_csv",
    "CSV_HEADER",
]

CSV_HEADER = (
    "configuration,task,test,measurement,base_mean,cand_mean,ratio,"
    "percent_change,deviation,zero_variance,welch_p,mw_p"
)

DEFAULT_MIN_DEVIATION = 2.0


@dataclass(frozen=True)
class ComparisonRow:
    key: MetricKey
    base: SampleStats
    cand: SampleStats
    ratio: float | None
    percent_change: float | None
    deviation: float | None
    zero_variance: bool
    zero_mean: bool = False
    welch: TestResult | None = None
    mann_whitney_p: float | None = None


@dataclass(frozen=True)
class ComparisonReport:
    base_revision: str
    cand_revision: str
    rows: list[ComparisonRow]
    skipped: list[MetricKey] = field(default_factory=list)
    min_deviation_filter: float = 0.0
    generated_at: datetime = field(default_factory=utcnow)


def build_row(
    key: MetricKey,
    base_region: StableRegion,
    cand_region: StableRegion,
    base_values: list[float] | None = None,
    cand_values: list[float] | None = None,
) -> ComparisonRow:
    """One comparison row from two stable regions.

    A zero baseline mean leaves ratio/percent undefined (flagged, never
    sorted above defined rows); a zero baseline variance leaves the
    sigma-deviation undefined and flags the row instead of dropping it.
    """
    base, cand = base_region.stats, cand_region.stats
    zero_mean = base.mean == 0.0
    zero_variance = base.variance == 0.0
    ratio = None if zero_mean else cand.mean / base.mean
    percent = None if ratio is None else (ratio - 1.0) * 100.0
    deviation = (
        None if zero_variance
        else (cand.mean - base.mean) / math.sqrt(base.variance)
    )
    welch = None
    if base.n >= 2 and cand.n >= 2:
        try:
            welch = welch_t_test(cand, base)
        except DegenerateSamplesError:
            welch = None
    mw_p = None
    if base_values and cand_values and base.n >= 2 and cand.n >= 2:
        mw_p = mann_whitney_u(cand_values, base_values).p_value
    return ComparisonRow(
        key=key, base=base, cand=cand, ratio=ratio, percent_change=percent,
        deviation=deviation, zero_variance=zero_variance, zero_mean=zero_mean,
        welch=welch, mann_whitney_p=mw_p,
    )


def compare_revisions(
    store: ResultStore,
    base_revision: str,
    cand_revision: str,
    key_filter: str | None = None,
) -> ComparisonReport:
    """Build one row per metric with data at both revisions.

    Metrics present at only one side land in the skipped list. The report
    is unfiltered and unsorted; run filter_and_sort for presentation.
    """
    rows: list[ComparisonRow] = []
    skipped: list[MetricKey] = []
    for key in store.list_keys(key_filter):
        try:
            base_region = region_before_revision(store, key, base_revision)
            cand_region = region_before_revision(store, key, cand_revision)
        except NotFoundError:
            skipped.append(key)
            continue
        values = store.get_series(key).values()
        rows.append(
            build_row(
                key, base_region, cand_region,
                base_values=values[base_region.start:base_region.end],
                cand_values=values[cand_region.start:cand_region.end],
            )
        )
    if not rows:
        raise NotFoundError(
            f"no metric has data at both {base_revision!r} and {cand_revision!r}"
        )
    return ComparisonReport(
        base_revision=base_revision, cand_revision=cand_revision,
        rows=rows, skipped=skipped,
    )


def _sort_rank(row: ComparisonRow) -> tuple:
    magnitude = -1.0 if row.percent_change is None else abs(row.percent_change)
    return (-magnitude, row.key)


def filter_and_sort(
    report: ComparisonReport, min_deviation: float = DEFAULT_MIN_DEVIATION
) -> ComparisonReport:
    """Drop rows below the sigma threshold, sort by |percent change| desc.

    Zero-variance rows have no sigma-deviation to threshold on; they are
    retained flagged rather than silently dropped. Deterministic tie-break
    on the metric key; idempotent.
    """
    kept = [
        row for row in report.rows
        if row.zero_variance or abs(row.deviation) >= min_deviation
    ]
    kept.sort(key=_sort_rank)
    return replace(report, rows=kept, min_deviation_filter=min_deviation)


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return repr(value)


def export_csv(report: ComparisonReport) -> bytes:
    """RFC-4180 CSV of the report rows, floats in round-trip-exact form."""
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(CSV_HEADER.split(","))
    for row in report.rows:
        writer.writerow(
            [
                row.key.configuration, row.key.task, row.key.test,
                row.key.measurement,
                _fmt(row.base.mean), _fmt(row.cand.mean),
                _fmt(row.ratio), _fmt(row.percent_change), _fmt(row.deviation),
                "true" if row.zero_variance else "false",
                _fmt(row.welch.p_value if row.welch else None),
                _fmt(row.mann_whitney_p),
            ]
        )
    return buf.getvalue().encode("utf-8")
