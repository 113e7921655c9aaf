"""MASE scoring: per-series scales from the registered context, incremental
partial scores while actuals arrive, and immutable consolidated scores at
challenge closure.

MASE = mean_i |forecast_i - actual_i| / scale, where scale is the in-sample
mean absolute seasonal-naive error over the context window that was served
for the challenge. A zero or undefined scale is "degenerate": the series is
excluded from aggregation for every model symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from statistics import fmean
from typing import Optional

from .errors import InsufficientContext, NoActuals, NotClosed
from .timebase import Frequency, SeriesId

# seasonal period (in steps) by grid step; anything else falls back to 1
SEASONAL_PERIODS = {
    timedelta(minutes=15): 96,
    timedelta(hours=1): 24,
    timedelta(days=1): 7,
}

COVERAGE_FLOOR = 0.5  # series is void below this fraction of observed horizon actuals


def seasonal_period_for(frequency: Frequency) -> int:
    return SEASONAL_PERIODS.get(frequency.step, 1)


def mase_scale(
    points: list[tuple[datetime, float]], step: timedelta, m: int
) -> Optional[float]:
    """Mean absolute lag-m difference over the context grid.

    Pairs with a gap at t or t-m are skipped. Returns None (degenerate)
    when no usable pair exists or the mean is exactly zero.
    """
    if len(points) < m + 1:
        raise InsufficientContext(f"need at least {m + 1} context points, got {len(points)}")
    by_time = dict(points)
    lag = m * step
    diffs = [
        abs(value - by_time[ts - lag])
        for ts, value in points
        if ts - lag in by_time
    ]
    if not diffs:
        return None
    scale = fmean(diffs)
    return None if scale == 0.0 else scale


def mase(
    forecast: list[float],
    actuals: list[tuple[int, float]],
    scale: float,
) -> float:
    """Scaled MAE over the observed horizon steps (1-based step indices)."""
    if not actuals:
        raise NoActuals("no horizon actuals observed yet")
    errors = [abs(forecast[i - 1] - actual) for i, actual in actuals]
    return fmean(errors) / scale


@dataclass
class SeriesScore:
    challenge_id: str
    series: SeriesId
    model_id: str
    mase: Optional[float]
    steps_observed: int
    steps_scored: int
    status: str  # "partial" | "final" | "void"
    scale: Optional[float]
    pinned_actuals: Optional[tuple[tuple[int, float], ...]] = None


@dataclass
class ChallengeScore:
    challenge_id: str
    model_id: str
    aggregate_mase: float
    series_count_scored: int
    finalized_at: datetime


@dataclass
class _ChallengeEval:
    scales: dict[tuple[str, str], Optional[float]] = field(default_factory=dict)
    series_scores: dict[tuple[str, tuple[str, str]], SeriesScore] = field(default_factory=dict)
    challenge_scores: dict[str, ChallengeScore] = field(default_factory=dict)
    finalized: bool = False


class EvaluationEngine:
    """Holds per-challenge scales and score state; reads actuals via the store."""

    def __init__(self, store):
        self.store = store
        self._challenges: dict[str, _ChallengeEval] = {}

    def _eval(self, challenge_id: str) -> _ChallengeEval:
        return self._challenges.setdefault(challenge_id, _ChallengeEval())

    # -- scale registration (at reveal) --------------------------------------

    def register_scale_context(
        self,
        challenge_id: str,
        series: SeriesId,
        context_points: list[tuple[datetime, float]],
        frequency: Frequency,
    ) -> Optional[float]:
        """Compute and pin the MASE denominator from the context as served.

        Falls back to seasonal period 1 when the context is too short for
        the frequency's default period. Idempotent per (challenge, series).
        """
        ev = self._eval(challenge_id)
        if series.key in ev.scales:
            return ev.scales[series.key]
        m = seasonal_period_for(frequency)
        if len(context_points) < m + 1:
            m = 1
        try:
            scale = mase_scale(context_points, frequency.step, m)
        except InsufficientContext:
            scale = None
        ev.scales[series.key] = scale
        return scale

    def scale_for(self, challenge_id: str, series: SeriesId) -> Optional[float]:
        return self._eval(challenge_id).scales.get(series.key)

    # -- scoring ---------------------------------------------------------------

    def _observed_actuals(
        self, series: SeriesId, grid: list[datetime], tx_time: datetime
    ) -> list[tuple[int, float]]:
        view = self.store.as_of(series, grid[0], grid[-1], tx_time)
        index = {ts: i + 1 for i, ts in enumerate(grid)}
        return [(index[ts], value) for ts, value in view.points if ts in index]

    def update_partial(self, challenge, submissions, now: datetime) -> list[SeriesScore]:
        """Recompute partial scores for every submission from actuals visible now.

        Pure function of the store state and submissions; idempotent.
        """
        ev = self._eval(challenge.spec.challenge_id)
        if ev.finalized:
            return []
        grid = challenge.horizon_grid()
        updated = []
        actual_cache: dict[tuple[str, str], list[tuple[int, float]]] = {}
        for sub in submissions:
            series = sub.true_series
            if series.key not in actual_cache:
                actual_cache[series.key] = self._observed_actuals(series, grid, now)
            actuals = actual_cache[series.key]
            scale = ev.scales.get(series.key)
            value = None
            scored = 0
            if scale is not None and actuals:
                value = mase(sub.values, actuals, scale)
                scored = len(actuals)
            score = SeriesScore(
                challenge_id=challenge.spec.challenge_id,
                series=series,
                model_id=sub.model_id,
                mase=value,
                steps_observed=len(actuals),
                steps_scored=scored,
                status="partial",
                scale=scale,
            )
            ev.series_scores[(sub.model_id, series.key)] = score
            updated.append(score)
        return updated

    def finalize(self, challenge, submissions, now: datetime) -> dict[str, ChallengeScore]:
        """Consolidate final scores once the challenge is closed.

        Scores bind to the as-of view at finalization and never change
        afterwards, even if later corrections rewrite stored actuals.
        """
        if challenge.stage != "closed":
            raise NotClosed(challenge.spec.challenge_id)
        ev = self._eval(challenge.spec.challenge_id)
        if ev.finalized:
            return dict(ev.challenge_scores)
        grid = challenge.horizon_grid()
        h = len(grid)
        per_model: dict[str, list[float]] = {}
        actual_cache: dict[tuple[str, str], list[tuple[int, float]]] = {}
        for sub in submissions:
            series = sub.true_series
            if series.key not in actual_cache:
                actual_cache[series.key] = self._observed_actuals(series, grid, now)
            actuals = actual_cache[series.key]
            scale = ev.scales.get(series.key)
            void = scale is None or len(actuals) < COVERAGE_FLOOR * h
            if void:
                score = SeriesScore(
                    challenge_id=challenge.spec.challenge_id,
                    series=series,
                    model_id=sub.model_id,
                    mase=None,
                    steps_observed=len(actuals),
                    steps_scored=0,
                    status="void",
                    scale=scale,
                    pinned_actuals=tuple(actuals),
                )
            else:
                value = mase(sub.values, actuals, scale)
                score = SeriesScore(
                    challenge_id=challenge.spec.challenge_id,
                    series=series,
                    model_id=sub.model_id,
                    mase=value,
                    steps_observed=len(actuals),
                    steps_scored=len(actuals),
                    status="final",
                    scale=scale,
                    pinned_actuals=tuple(actuals),
                )
                per_model.setdefault(sub.model_id, []).append(value)
            ev.series_scores[(sub.model_id, series.key)] = score
        for model_id, values in sorted(per_model.items()):
            ev.challenge_scores[model_id] = ChallengeScore(
                challenge_id=challenge.spec.challenge_id,
                model_id=model_id,
                aggregate_mase=fmean(values),
                series_count_scored=len(values),
                finalized_at=now,
            )
        ev.finalized = True
        return dict(ev.challenge_scores)

    # -- reads -------------------------------------------------------------------

    def is_finalized(self, challenge_id: str) -> bool:
        return self._eval(challenge_id).finalized

    def series_scores(self, challenge_id: str) -> list[SeriesScore]:
        ev = self._eval(challenge_id)
        return [ev.series_scores[k] for k in sorted(ev.series_scores)]

    def challenge_scores(self, challenge_id: str) -> dict[str, ChallengeScore]:
        return dict(self._eval(challenge_id).challenge_scores)

    def all_challenge_scores(self) -> list[ChallengeScore]:
        out = []
        for cid in sorted(self._challenges):
            out.extend(self._challenges[cid].challenge_scores.values())
        return out
