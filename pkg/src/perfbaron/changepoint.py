"""E-Divisive mean-shift detection with permutation significance.

A segment's candidate split is the tau maximizing the energy divergence
Q(tau); significance comes from permuting the segment and comparing the
permuted maxima against the observed one. Significant splits recurse into
both halves (hierarchical binary segmentation). The flat stretches between
accepted change points are the stable regions used by revision comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum

import numpy as np

from .errors import NotFoundError, ValidationError
from .model import MetricKey, ResultStore, Series, parse_ts, utcnow
from .stats import SampleStats, describe

__all__ = [
    "CpdParams",
    "ChangePoint",
    "StableRegion",
    "TriageState",
    "qhat",
    "detect",
    "stable_regions",
    "region_before_revision",
    "run_detection",
]

# Redetection looks at most this far back; older points are settled history.
DEFAULT_TAIL_WINDOW = 500


class TriageState(str, Enum):
    UNTRIAGED = "UNTRIAGED"
    ACKNOWLEDGED = "ACKNOWLEDGED"
    HIDDEN = "HIDDEN"
    TICKETED = "TICKETED"


@dataclass(frozen=True)
class CpdParams:
    alpha_exponent: float = 1.0
    significance: float = 0.05
    permutations: int = 200
    min_segment: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha_exponent <= 2.0:
            raise ValidationError("alpha_exponent must be in (0, 2]")
        if not 0.0 < self.significance < 1.0:
            raise ValidationError("significance must be in (0, 1)")
        if self.permutations < 1:
            raise ValidationError("permutations must be positive")
        if self.min_segment < 2:
            raise ValidationError("min_segment must be >= 2")


@dataclass(frozen=True)
class StableRegion:
    key: MetricKey
    start: int
    end: int  # half-open
    stats: SampleStats


@dataclass
class ChangePoint:
    key: MetricKey
    order_index: int  # first index of the new regime
    revision: str
    commit_date: datetime
    calculated_on: datetime
    qhat: float
    p_value: float
    before: StableRegion
    after: StableRegion
    triage_state: TriageState = TriageState.UNTRIAGED
    ticket_id: str | None = None
    id: int | None = None
    version: int = 1


def _distance_matrix(values: np.ndarray, alpha: float) -> np.ndarray:
    d = np.abs(values[:, None] - values[None, :])
    if alpha != 1.0:
        d **= alpha
    return d


def _qhat_profile(dist: np.ndarray, min_segment: int) -> tuple[np.ndarray, np.ndarray]:
    """Q(tau) for every admissible tau of one segment, O(n^2) total.

    Uses prefix sums over the (symmetric, zero-diagonal) distance matrix:
    with R(t) the double sum over pairs below t and S(t) the sum of the
    first t rows, the cross and within-segment sums all fall out in one pass.
    """
    n = dist.shape[0]
    row_tot = dist.sum(axis=1)
    s = np.concatenate(([0.0], np.cumsum(row_tot)))
    a = np.empty(n)
    a[0] = 0.0
    csum = np.cumsum(dist, axis=1)
    a[1:] = csum[np.arange(1, n), np.arange(0, n - 1)]
    r = np.concatenate(([0.0], np.cumsum(2.0 * a)))
    total = float(s[n])
    taus = np.arange(min_segment, n - min_segment + 1)
    m = taus.astype(float)
    k = (n - taus).astype(float)
    within_x = r[taus] / 2.0
    cross = s[taus] - r[taus]
    within_y = (total - 2.0 * s[taus] + r[taus]) / 2.0
    d = (
        2.0 * cross / (m * k)
        - within_x / (m * (m - 1.0) / 2.0)
        - within_y / (k * (k - 1.0) / 2.0)
    )
    return taus, (m * k / (m + k)) * d


def qhat(series_values: list[float], tau: int, alpha: float = 1.0) -> float:
    """Energy divergence of the split at tau (first tau values vs the rest)."""
    n = len(series_values)
    if not 2 <= tau <= n - 2:
        raise ValidationError(f"tau must be in [2, {n - 2}], got {tau}")
    dist = _distance_matrix(np.asarray(series_values, dtype=float), alpha)
    taus, q = _qhat_profile(dist, min(tau, n - tau))
    return float(q[np.searchsorted(taus, tau)])


def _segment_split(
    dist: np.ndarray, params: CpdParams, rng: np.random.Generator
) -> tuple[int, float, float] | None:
    """Best split of one segment, or None if not significant.

    Returns (tau, qhat, p_value). Ties in the argmax break toward the
    smallest tau. The permutation p-value uses the add-one estimator.
    """
    n = dist.shape[0]
    if n < 2 * params.min_segment:
        return None
    taus, q = _qhat_profile(dist, params.min_segment)
    best = int(np.argmax(q))
    q_obs = float(q[best])
    hits = 0
    for _ in range(params.permutations):
        perm = rng.permutation(n)
        _, qp = _qhat_profile(dist[np.ix_(perm, perm)], params.min_segment)
        if float(qp.max()) >= q_obs:
            hits += 1
    p = (hits + 1) / (params.permutations + 1)
    if p >= params.significance:
        return None
    return int(taus[best]), q_obs, p


def _find_split_indices(
    values: np.ndarray, params: CpdParams
) -> list[tuple[int, float, float]]:
    """All accepted (index, qhat, p) splits, left-to-right recursion order."""
    rng = np.random.default_rng(params.rng_seed)
    found: list[tuple[int, float, float]] = []

    def recurse(start: int, end: int) -> None:
        seg = values[start:end]
        if len(seg) < 2 * params.min_segment:
            return
        dist = _distance_matrix(seg, params.alpha_exponent)
        split = _segment_split(dist, params, rng)
        if split is None:
            return
        tau, q_obs, p = split
        found.append((start + tau, q_obs, p))
        recurse(start, start + tau)
        recurse(start + tau, end)

    recurse(0, len(values))
    return sorted(found)


def stable_regions(series: Series, cps: list[ChangePoint]) -> list[StableRegion]:
    """Partition of [0, len(series)) induced by the change point indices."""
    return _regions_from_indices(
        series, [cp.order_index for cp in cps]
    )


def _regions_from_indices(series: Series, indices: list[int]) -> list[StableRegion]:
    n = len(series.points)
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValidationError("change point indices must be sorted and distinct")
    if indices and not (0 < indices[0] and indices[-1] < n):
        raise ValidationError("change point indices must lie inside the series")
    bounds = [0, *indices, n]
    values = series.values()
    return [
        StableRegion(
            key=series.key, start=a, end=b, stats=describe(values[a:b])
        )
        for a, b in zip(bounds, bounds[1:])
    ]


def detect(series: Series, params: CpdParams) -> list[ChangePoint]:
    """Detect change points in a series; deterministic for a fixed rng_seed.

    Series shorter than 2*min_segment yield no change points. Output is
    sorted by order_index and carries the stable regions of the final
    partition on each side of every split.
    """
    n = len(series.points)
    if n < 2 * params.min_segment:
        return []
    values = np.asarray(series.values(), dtype=float)
    splits = _find_split_indices(values, params)
    if not splits:
        return []
    regions = _regions_from_indices(series, [idx for idx, _, _ in splits])
    now = utcnow()
    out: list[ChangePoint] = []
    for region_pos, (idx, q_obs, p) in enumerate(splits):
        point = series.points[idx]
        out.append(
            ChangePoint(
                key=series.key,
                order_index=idx,
                revision=point.revision,
                commit_date=point.commit_date,
                calculated_on=now,
                qhat=q_obs,
                p_value=p,
                before=regions[region_pos],
                after=regions[region_pos + 1],
            )
        )
    return out


# -- persistence and store-level lookups ---------------------------------------


def _region_to_json(region: StableRegion) -> dict:
    return {
        "start": region.start, "end": region.end,
        "n": region.stats.n, "mean": region.stats.mean,
        "variance": region.stats.variance,
        "min": region.stats.min, "max": region.stats.max,
    }


def _region_from_json(key: MetricKey, obj: dict) -> StableRegion:
    return StableRegion(
        key=key, start=obj["start"], end=obj["end"],
        stats=SampleStats(
            n=obj["n"], mean=obj["mean"], variance=obj["variance"],
            min=obj["min"], max=obj["max"],
        ),
    )


def persist_change_points(
    store: ResultStore, key: MetricKey, cps: list[ChangePoint], window_start: int = 0
) -> None:
    """Replace persisted change points at or after window_start with `cps`.

    Redetected indices keep their triage state, ticket link and version;
    everything else about them (q, p, regions, calculated_on) refreshes.
    """
    existing = {cp.order_index: cp for cp in store_change_points(store, key)}
    with store._lock, store._conn:
        store._conn.execute(
            """DELETE FROM change_points WHERE project=? AND configuration=? AND task=?
               AND test=? AND measurement=? AND order_index >= ?""",
            (key.project, key.configuration, key.task, key.test, key.measurement,
             window_start),
        )
        for cp in cps:
            if cp.order_index < window_start:
                continue
            prior = existing.get(cp.order_index)
            state = prior.triage_state if prior else cp.triage_state
            ticket = prior.ticket_id if prior else cp.ticket_id
            version = prior.version if prior else 1
            store._conn.execute(
                """INSERT INTO change_points
                   (project, configuration, task, test, measurement, order_index,
                    revision, commit_date, calculated_on, qhat, p_value,
                    before_json, after_json, is_canary, triage_state, ticket_id, version)
                   VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)""",
                (
                    key.project, key.configuration, key.task, key.test,
                    key.measurement, cp.order_index, cp.revision,
                    cp.commit_date.isoformat(), cp.calculated_on.isoformat(),
                    cp.qhat, cp.p_value,
                    json.dumps(_region_to_json(cp.before)),
                    json.dumps(_region_to_json(cp.after)),
                    int(store.is_canary_key(key)), state.value, ticket, version,
                ),
            )


def _row_to_change_point(row) -> ChangePoint:
    key = MetricKey(
        row["project"], row["configuration"], row["task"],
        row["test"], row["measurement"],
    )
    return ChangePoint(
        key=key,
        order_index=row["order_index"],
        revision=row["revision"],
        commit_date=parse_ts(row["commit_date"]),
        calculated_on=parse_ts(row["calculated_on"]),
        qhat=row["qhat"],
        p_value=row["p_value"],
        before=_region_from_json(key, json.loads(row["before_json"])),
        after=_region_from_json(key, json.loads(row["after_json"])),
        triage_state=TriageState(row["triage_state"]),
        ticket_id=row["ticket_id"],
        id=row["id"],
        version=row["version"],
    )


def store_change_points(store: ResultStore, key: MetricKey) -> list[ChangePoint]:
    rows = store._conn.execute(
        """SELECT * FROM change_points WHERE project=? AND configuration=? AND task=?
           AND test=? AND measurement=? ORDER BY order_index""",
        (key.project, key.configuration, key.task, key.test, key.measurement),
    ).fetchall()
    return [_row_to_change_point(row) for row in rows]


def run_detection(
    store: ResultStore,
    params: CpdParams,
    key_filter: str | None = None,
    tail_window: int = DEFAULT_TAIL_WINDOW,
) -> dict[MetricKey, list[ChangePoint]]:
    """Detect and persist change points for every key matching the filter.

    Only the tail window of each series is re-analyzed; persisted change
    points in that window are reconciled against the fresh detection (the
    commit date and the calculated-on date stay distinct on purpose).
    """
    results: dict[MetricKey, list[ChangePoint]] = {}
    for key in store.list_keys(key_filter):
        series = store.get_series(key)
        n = len(series.points)
        if n < 2 * params.min_segment:
            results[key] = store_change_points(store, key)
            continue
        offset = max(0, n - tail_window)
        tail = Series(key=key, points=series.points[offset:])
        detected = detect(tail, params)
        shifted = [
            replace(cp, order_index=cp.order_index + offset,
                    before=replace(cp.before, start=cp.before.start + offset,
                                   end=cp.before.end + offset),
                    after=replace(cp.after, start=cp.after.start + offset,
                                  end=cp.after.end + offset))
            for cp in detected
        ]
        persist_change_points(store, key, shifted, window_start=offset)
        results[key] = store_change_points(store, key)
    return results


def region_before_revision(
    store: ResultStore, key: MetricKey, revision: str
) -> StableRegion:
    """Stable region containing the revision, from persisted change points.

    The region runs from the most recent change point at or before the
    revision (or the series start) up to the next change point (or the
    series end); its stats are recomputed from the live series.
    """
    series = store.get_series(key)
    pos = next(
        (i for i, p in enumerate(series.points) if p.revision == revision), None
    )
    if pos is None:
        raise NotFoundError(
            f"revision {revision!r} has no data for {key.canonical()}"
        )
    indices = [cp.order_index for cp in store_change_points(store, key)]
    indices = [i for i in indices if 0 < i < len(series.points)]
    for region in _regions_from_indices(series, indices):
        if region.start <= pos < region.end:
            return region
    raise AssertionError("stable regions must cover the series")
