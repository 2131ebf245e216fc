"""Generalized ESD outlier detection over the recent window of a series.

Sequentially removes up to r extreme studentized deviates and compares each
R_i against a t-based critical value lambda_i; the outlier count is the
largest i with R_i > lambda_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ValidationError
from .model import Series
from .stats import t_quantile

__all__ = ["GesdParams", "OutlierReport", "gesd", "latest_point_is_outlier"]


@dataclass(frozen=True)
class GesdParams:
    max_outliers: int = 10
    significance: float = 0.05
    window: int = 100

    def __post_init__(self):
        if self.max_outliers < 1:
            raise ValidationError("max_outliers must be positive")
        if not 0.0 < self.significance < 1.0:
            raise ValidationError("significance must be in (0, 1)")
        # lambda_i needs n - i - 1 >= 1 dof, so r can be at most window - 2
        if self.max_outliers > self.window - 2:
            raise ValidationError("max_outliers must be <= window - 2")


@dataclass(frozen=True)
class OutlierReport:
    indices: list[int]
    trail: list[tuple[int, float, float]]  # (candidate_index, R_i, lambda_i)
    count: int = 0

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "trail": [list(t) for t in self.trail],
            "count": self.count,
        }


def _critical_value(n: int, i: int, alpha: float) -> float:
    """lambda_i = (n-i) t / sqrt((nu + t^2)(n-i+1)), nu = n-i-1."""
    nu = n - i - 1
    p = 1.0 - alpha / (2.0 * (n - i + 1))
    t = t_quantile(p, float(nu))
    return (n - i) * t / math.sqrt((nu + t * t) * (n - i + 1))


def _run_gesd(values: list[float], r: int, alpha: float) -> OutlierReport:
    n = len(values)
    remaining = list(range(n))
    trail: list[tuple[int, float, float]] = []
    for i in range(1, r + 1):
        xs = [values[j] for j in remaining]
        m = len(xs)
        mean = math.fsum(xs) / m
        var = math.fsum((x - mean) ** 2 for x in xs) / (m - 1) if m > 1 else 0.0
        sd = math.sqrt(var)
        if sd == 0.0:
            cand = remaining[0]
            r_i = 0.0
        else:
            best = 0
            best_dev = abs(xs[0] - mean)
            for k in range(1, m):
                dev = abs(xs[k] - mean)
                if dev > best_dev:
                    best, best_dev = k, dev
            cand = remaining[best]
            r_i = best_dev / sd
            remaining.pop(best)
        trail.append((cand, r_i, _critical_value(n, i, alpha)))
    count = 0
    for i, (_, r_i, lam) in enumerate(trail, start=1):
        if r_i > lam:
            count = i
    return OutlierReport(
        indices=[trail[k][0] for k in range(count)], trail=trail, count=count
    )


def gesd(values: list[float], params: GesdParams) -> OutlierReport:
    """Run GESD on the last `params.window` points of `values`.

    Reported indices are positions in the full input list. A zero-variance
    window short-circuits to an empty report.
    """
    if len(values) < params.window:
        raise ValidationError(
            f"gesd needs at least window={params.window} values, got {len(values)}"
        )
    offset = len(values) - params.window
    window = values[offset:]
    if min(window) == max(window):
        return OutlierReport(indices=[], trail=[], count=0)
    report = _run_gesd(window, params.max_outliers, params.significance)
    return OutlierReport(
        indices=[offset + j for j in report.indices],
        trail=[(offset + j, r_i, lam) for j, r_i, lam in report.trail],
        count=report.count,
    )


def latest_point_is_outlier(
    series: Series,
    params: GesdParams,
    change_point_indices: list[int] | None = None,
) -> bool:
    """True iff the newest point of the series is flagged by GESD.

    The analyzed window is the last `params.window` points, shrunk to the
    region after the most recent change point when one falls inside the
    window (a regime shift is not testbed noise). Series shorter than the
    window have insufficient history and are never flagged.
    """
    n = len(series.points)
    if n < params.window:
        return False
    start = n - params.window
    if change_point_indices:
        inside = [i for i in change_point_indices if start < i < n]
        if inside:
            start = max(inside)
    values = [p.value for p in series.points[start:]]
    m = len(values)
    if m < 3 or min(values) == max(values):
        return False
    r = min(params.max_outliers, m - 2)
    report = _run_gesd(values, r, params.significance)
    return (m - 1) in report.indices
