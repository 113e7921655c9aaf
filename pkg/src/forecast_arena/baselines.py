"""Statistical baseline forecasters and the agents that enter them into
challenges through the public gateway path.

Baselines never read the store directly: they consume exactly the context
payloads the gateway serves to any external participant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from statistics import fmean
from typing import Optional

from .errors import EmptyContext, InsufficientSeasonalHistory
from .timebase import Scope

logger = logging.getLogger(__name__)

Point = tuple[datetime, float]


@dataclass(frozen=True)
class BaselineConfig:
    kind: str  # "naive" | "moving_average" | "seasonal_average"
    window: int = 24  # moving_average: steps averaged
    period: int = 24  # seasonal_average: season length in steps
    periods_to_average: int = 4  # seasonal_average: how many past seasons
    auto_enroll_scopes: tuple[Scope, ...] = (Scope(),)
    name: Optional[str] = None

    def __post_init__(self):
        if self.window < 1 or self.period < 1 or self.periods_to_average < 1:
            raise ValueError("baseline parameters must be >= 1")

    def display_name(self) -> str:
        if self.name:
            return self.name
        if self.kind == "naive":
            return "baseline-naive"
        if self.kind == "moving_average":
            return f"baseline-moving-average-{self.window}"
        return f"baseline-seasonal-average-{self.period}x{self.periods_to_average}"


def forecast_naive(points: list[Point], h: int) -> list[float]:
    """Every horizon step repeats the last observed value, gap or not."""
    if not points:
        raise EmptyContext("naive forecast needs at least one observation")
    return [points[-1][1]] * h


def forecast_moving_average(points: list[Point], w: int, h: int) -> list[float]:
    """Flat forecast at the mean of the last min(w, available) observations."""
    if not points:
        raise EmptyContext("moving average needs at least one observation")
    level = fmean([v for _, v in points[-w:]])
    return [level] * h


def forecast_seasonal_average(
    points: list[Point],
    t_p: datetime,
    step: timedelta,
    m: int,
    k: int,
    h: int,
) -> list[float]:
    """Horizon step i averages the values sitting at the same seasonal
    position (grid offset mod m) over the last <= k observed periods.

    Bucketing is by timestamp, so internal gaps never shift alignment;
    positions with no observation at all fall back to the naive rule.
    """
    if not points:
        raise EmptyContext("seasonal average needs observations")
    span_steps = round((points[-1][0] - points[0][0]) / step) + 1
    if span_steps < m:
        raise InsufficientSeasonalHistory(
            f"context spans {span_steps} steps, need a full period of {m}"
        )
    # position class of each context point relative to t_p, newest first
    buckets: dict[int, list[float]] = {}
    for ts, value in reversed(points):
        offset = round((t_p - ts) / step)  # 0 at t_p, grows into the past
        cls = (-offset) % m
        bucket = buckets.setdefault(cls, [])
        if len(bucket) < k:
            bucket.append(value)
    last_value = points[-1][1]
    out = []
    for i in range(1, h + 1):
        bucket = buckets.get(i % m)
        out.append(fmean(bucket) if bucket else last_value)
    return out


def forecast(
    config: BaselineConfig,
    points: list[Point],
    t_p: datetime,
    step: timedelta,
    h: int,
) -> list[float]:
    if config.kind == "naive":
        return forecast_naive(points, h)
    if config.kind == "moving_average":
        return forecast_moving_average(points, config.window, h)
    if config.kind == "seasonal_average":
        return forecast_seasonal_average(
            points, t_p, step, config.period, config.periods_to_average, h
        )
    raise ValueError(f"unknown baseline kind {config.kind!r}")


@dataclass
class BaselineAgent:
    """One registered baseline participant polling the gateway."""

    config: BaselineConfig
    service: object  # ArenaService; agents use the same entry points as HTTP
    model_id: str = ""
    api_key: str = ""
    _done: set[tuple[str, str]] = field(default_factory=set)

    def register(self) -> None:
        card, key = self.service.register_model(
            declared_name_version=self.config.display_name(),
            architecture_class="statistical-baseline",
            approx_size="closed-form",
            external_data_used=False,
            mode="containerized",
        )
        self.model_id = card.model_id
        self.api_key = key.key

    def in_scope(self, bucket) -> bool:
        return any(scope.matches(bucket) for scope in self.config.auto_enroll_scopes)

    def tick(self, now: datetime) -> int:
        """Submit forecasts for every in-scope challenge currently in registration."""
        submitted = 0
        for summary in self.service.list_challenges(state="registration"):
            if not self.in_scope(summary["bucket_key"]):
                continue
            challenge_id = summary["challenge_id"]
            step = summary["bucket_key"].frequency.step
            for alias in summary["aliases"]:
                if (challenge_id, alias) in self._done:
                    continue
                try:
                    payload = self.service.get_context(self.api_key, challenge_id, alias)
                    prediction = forecast(
                        self.config, list(payload.points), payload.t_p, step, payload.horizon_h
                    )
                    self.service.submit_forecast(
                        api_key=self.api_key,
                        challenge_id=challenge_id,
                        series_alias=alias,
                        values=prediction,
                        client_submit_time=now,
                        external_data_used=False,
                    )
                    self._done.add((challenge_id, alias))
                    submitted += 1
                except Exception:
                    logger.exception(
                        "baseline %s failed on %s/%s", self.model_id, challenge_id, alias
                    )
        return submitted
