"""Pluggable providers, idempotent pulls, freshness checks and the pull scheduler.

Providers hand back raw batches stamped in their native timezone; ingestion
normalizes to UTC, validates values, attaches provenance and upserts into
the SCD2 store. Re-running any pull schedule against a fresh store yields
an identical store state.
"""

from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional, Protocol
from zoneinfo import ZoneInfo

from .errors import ProviderUnavailable, UnknownSeries
from .store import Provenance, Scd2Store, UpsertOutcome
from .synthetic import SyntheticSeriesSpec, emitted_value
from .timebase import UTC, SeriesId, parse_rfc3339

logger = logging.getLogger(__name__)

DEFAULT_STALENESS_STEPS = 3


@dataclass(frozen=True)
class ProviderDescriptor:
    name: str
    kind: str  # "synthetic" | "http_stub"
    series_catalog: tuple[SeriesId, ...]
    rate_limit: int  # max requests per minute
    pull_interval: timedelta
    lookback: Optional[timedelta] = None  # default 2 x pull_interval
    backfill: Optional[timedelta] = None  # extra depth for the very first pull

    def __post_init__(self):
        if self.rate_limit <= 0:
            raise ValueError("rate_limit must be positive")
        fastest = min((s.native_frequency for s in self.series_catalog), default=None)
        if fastest is not None and self.pull_interval < fastest:
            raise ValueError("pull_interval must be >= fastest native frequency")

    def effective_lookback(self) -> timedelta:
        return self.lookback if self.lookback is not None else 2 * self.pull_interval


@dataclass
class RawBatch:
    series: SeriesId
    points: list[tuple[datetime, float]]  # provider-native zone stamps, any order
    pull_time: datetime
    endpoint: str


@dataclass
class IngestReport:
    inserted: int = 0
    superseded: int = 0
    noop: int = 0
    malformed: int = 0

    def add(self, outcome: UpsertOutcome) -> None:
        if outcome is UpsertOutcome.INSERTED:
            self.inserted += 1
        elif outcome is UpsertOutcome.SUPERSEDED:
            self.superseded += 1
        else:
            self.noop += 1


@dataclass(frozen=True)
class FreshnessReport:
    series: SeriesId
    latest_event_time: Optional[datetime]
    stale: bool


class Provider(Protocol):
    descriptor: ProviderDescriptor

    def fetch(self, series: SeriesId, window_start: datetime, window_end: datetime) -> RawBatch: ...


class SyntheticProvider:
    """In-process provider backed by deterministic synthetic series specs."""

    def __init__(self, descriptor: ProviderDescriptor, specs: dict[tuple[str, str], SyntheticSeriesSpec]):
        self.descriptor = descriptor
        self._specs = specs

    def fetch(self, series: SeriesId, window_start: datetime, window_end: datetime) -> RawBatch:
        spec = self._specs[series.key]
        zone = ZoneInfo(series.original_timezone)
        step = series.native_frequency
        # first grid point >= window_start
        from .synthetic import GRID_EPOCH

        offset = (window_start - GRID_EPOCH) % step
        t = window_start if not offset else window_start + (step - offset)
        points: list[tuple[datetime, float]] = []
        while t <= window_end:
            value = emitted_value(spec, t, as_of=window_end)
            if value is not None:
                points.append((t.astimezone(zone), value))
            t += step
        return RawBatch(
            series=series,
            points=points,
            pull_time=window_end,
            endpoint=f"synthetic:{series.external_id}",
        )


class FixtureProvider:
    """http_stub connector reading recorded fixture lines:
    ``external_id,<event time with zone offset>,<value>``.

    Stands in for real HTTP feeds; live connectors implement the same
    fetch contract behind a config flag.
    """

    def __init__(self, descriptor: ProviderDescriptor, fixture_path: str):
        self.descriptor = descriptor
        self._rows: dict[str, list[tuple[datetime, float, str]]] = {}
        with open(fixture_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                external_id, stamp, raw_value = (part.strip() for part in line.split(",", 2))
                ts = datetime.fromisoformat(stamp.replace("Z", "+00:00"))
                self._rows.setdefault(external_id, []).append((ts, float(raw_value), raw_value))

    def fetch(self, series: SeriesId, window_start: datetime, window_end: datetime) -> RawBatch:
        rows = self._rows.get(series.external_id, [])
        points = [
            (ts, value)
            for ts, value, _ in rows
            if window_start <= ts.astimezone(UTC) <= window_end
        ]
        return RawBatch(
            series=series,
            points=points,
            pull_time=window_end,
            endpoint=f"fixture:{series.external_id}",
        )


class RateLimiter:
    """Sliding one-minute window per key."""

    def __init__(self, limit_per_minute: int):
        self.limit = limit_per_minute
        self._admitted: deque[datetime] = deque()

    def admit(self, now: datetime) -> bool:
        cutoff = now - timedelta(minutes=1)
        while self._admitted and self._admitted[0] <= cutoff:
            self._admitted.popleft()
        if len(self._admitted) >= self.limit:
            return False
        self._admitted.append(now)
        return True

    def retry_after(self, now: datetime) -> float:
        if not self._admitted:
            return 0.0
        return max(0.0, 60.0 - (now - self._admitted[0]).total_seconds())


def pull_and_ingest(
    store: Scd2Store,
    provider: Provider,
    series: SeriesId,
    now: datetime,
    window_start: Optional[datetime] = None,
) -> IngestReport:
    """One idempotent pull of `series` ending at `now`.

    Malformed points (non-finite values, naive stamps) are skipped and
    counted; they never abort the batch.
    """
    if series.key not in {s.key for s in provider.descriptor.series_catalog}:
        raise UnknownSeries(f"{series.external_id} not served by {provider.descriptor.name}")
    if window_start is None:
        window_start = now - provider.descriptor.effective_lookback()
    batch = provider.fetch(series, window_start, now)
    provenance = Provenance(
        provider=provider.descriptor.name,
        endpoint=batch.endpoint,
        pull_time=batch.pull_time,
    )
    report = IngestReport()
    for raw_ts, value in sorted(batch.points, key=lambda p: p[0]):
        if raw_ts.tzinfo is None or not math.isfinite(value):
            logger.warning(
                "malformed record from %s for %s at %r",
                provider.descriptor.name, series.external_id, raw_ts,
            )
            report.malformed += 1
            continue
        event_time = raw_ts.astimezone(UTC)
        report.add(store.upsert(series, event_time, value, provenance, tx_time=now))
    return report


def check_freshness(
    store: Scd2Store,
    series: SeriesId,
    now: datetime,
    threshold_steps: int = DEFAULT_STALENESS_STEPS,
) -> FreshnessReport:
    """Stale iff no visible point, or the newest one is strictly older than
    threshold_steps native steps."""
    latest = store.latest_event_time(series, tx_time=now)
    threshold = threshold_steps * series.native_frequency
    stale = latest is None or (now - latest) > threshold
    return FreshnessReport(series=series, latest_event_time=latest, stale=stale)


@dataclass
class _ProviderRuntime:
    provider: Provider
    limiter: RateLimiter
    next_due: Optional[datetime] = None
    first_pull_done: bool = False
    consecutive_failures: int = 0
    retry_at: Optional[datetime] = None


class IngestionScheduler:
    """Polls each provider at its pull_interval against an injected clock.

    Failures are isolated per provider and retried with capped exponential
    backoff plus jitter; a clock jump across several intervals triggers a
    single catch-up pull (the lookback window covers the skipped span).
    """

    def __init__(self, store: Scd2Store, providers: list[Provider], jitter_seed: int = 0):
        self.store = store
        self._runtimes = [
            _ProviderRuntime(provider=p, limiter=RateLimiter(p.descriptor.rate_limit))
            for p in providers
        ]
        self._rng = random.Random(jitter_seed)
        self.pull_counts: dict[str, int] = {p.descriptor.name: 0 for p in providers}
        for provider in providers:
            for series in provider.descriptor.series_catalog:
                store.register_series(series)

    def tick(self, now: datetime) -> list[IngestReport]:
        reports = []
        for rt in self._runtimes:
            desc = rt.provider.descriptor
            if rt.retry_at is not None and now < rt.retry_at:
                continue
            if rt.next_due is None:
                rt.next_due = now
            if now < rt.next_due:
                continue
            try:
                for series in desc.series_catalog:
                    if not rt.limiter.admit(now):
                        break
                    window_start = None
                    if not rt.first_pull_done and desc.backfill is not None:
                        window_start = now - desc.backfill
                    reports.append(
                        pull_and_ingest(self.store, rt.provider, series, now, window_start)
                    )
                rt.first_pull_done = True
                rt.consecutive_failures = 0
                rt.retry_at = None
                self.pull_counts[desc.name] += 1
                # catch up in one pull, then resume the regular cadence
                while rt.next_due <= now:
                    rt.next_due += desc.pull_interval
            except ProviderUnavailable as exc:
                rt.consecutive_failures += 1
                backoff = min(
                    desc.pull_interval.total_seconds(),
                    2.0 ** rt.consecutive_failures * (1.0 + 0.25 * self._rng.random()),
                )
                rt.retry_at = now + timedelta(seconds=backoff)
                logger.warning("provider %s unavailable (%s); retry in %.1fs",
                               desc.name, exc, backoff)
        self.store.flush()
        return reports

    def run(self, clock, should_stop) -> None:
        """Realtime loop; the simulation harness drives tick() directly instead."""
        while not should_stop():
            self.tick(clock.now())
            clock.sleep(1.0)
