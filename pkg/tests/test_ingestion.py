from datetime import timedelta
from zoneinfo import ZoneInfo

import pytest

from forecast_arena.clock import VirtualClock
from forecast_arena.errors import ProviderUnavailable, UnknownSeries
from forecast_arena.ingestion import (
    FixtureProvider,
    IngestionScheduler,
    ProviderDescriptor,
    RateLimiter,
    SyntheticProvider,
    check_freshness,
    pull_and_ingest,
)
from forecast_arena.store import Scd2Store
from forecast_arena.synthetic import SyntheticSeriesSpec
from forecast_arena.timebase import UTC

from conftest import T0, make_series


def synthetic_provider(series_list=None, pull_interval=timedelta(hours=1), **spec_kwargs):
    series_list = series_list or [make_series("s00")]
    descriptor = ProviderDescriptor(
        name="synth",
        kind="synthetic",
        series_catalog=tuple(series_list),
        rate_limit=600,
        pull_interval=pull_interval,
    )
    specs = {
        s.key: SyntheticSeriesSpec(series=s, base=100.0, **spec_kwargs)
        for s in series_list
    }
    return SyntheticProvider(descriptor, specs)


class TestPullAndIngest:
    def test_first_pull_inserts_full_window(self, store):
        series = make_series("s00")
        provider = synthetic_provider([series])
        now = T0 + timedelta(hours=48)
        report = pull_and_ingest(store, provider, series, now, window_start=T0 + timedelta(hours=1))
        # 48 hourly grid points in (T0, T0+48h]
        assert report.inserted == 48
        assert report.superseded == report.noop == report.malformed == 0

    def test_second_identical_pull_is_all_noop(self, store):
        series = make_series("s00")
        provider = synthetic_provider([series])
        now = T0 + timedelta(hours=4)
        pull_and_ingest(store, provider, series, now)
        report = pull_and_ingest(store, provider, series, now)
        assert report.inserted == 0 and report.superseded == 0
        assert report.noop > 0

    def test_correction_supersedes(self, store):
        series = make_series("s00")
        provider = synthetic_provider(
            [series], correction_rate=1.0, correction_offset=5.0,
            correction_delay=timedelta(hours=1),
        )
        event = T0 + timedelta(hours=1)
        pull_and_ingest(store, provider, series, event, window_start=event)
        report = pull_and_ingest(
            store, provider, series, event + timedelta(hours=2), window_start=event
        )
        assert report.superseded >= 1

    def test_series_not_in_catalog(self, store):
        provider = synthetic_provider([make_series("s00")])
        with pytest.raises(UnknownSeries):
            pull_and_ingest(store, provider, make_series("other"), T0)

    def test_timezone_soundness(self, store):
        series = make_series("s00", tz="Europe/Berlin")
        provider = synthetic_provider([series])
        now = T0 + timedelta(hours=6)
        pull_and_ingest(store, provider, series, now, window_start=T0 + timedelta(hours=1))
        batch = provider.fetch(series, T0 + timedelta(hours=1), now)
        zone = ZoneInfo("Europe/Berlin")
        stored = dict(store.as_of(series, T0, now, tx_time=now).points)
        for raw_ts, value in batch.points:
            event_utc = raw_ts.astimezone(UTC)
            assert stored[event_utc] == value
            # re-rendering UTC into the original zone matches the raw stamp
            assert event_utc.astimezone(zone) == raw_ts


class TestFreshness:
    def test_recent_series_is_fresh(self, store):
        series = make_series("s00")
        provider = synthetic_provider([series])
        last = T0 + timedelta(hours=10)
        pull_and_ingest(store, provider, series, last, window_start=T0 + timedelta(hours=1))
        report = check_freshness(store, series, now=last + timedelta(hours=2))
        assert not report.stale

    def test_empty_series_is_stale(self, store):
        series = make_series("s00")
        store.register_series(series)
        report = check_freshness(store, series, now=T0)
        assert report.stale and report.latest_event_time is None

    def test_exactly_at_threshold_is_fresh(self, store):
        series = make_series("s00")
        provider = synthetic_provider([series])
        last = T0 + timedelta(hours=10)
        pull_and_ingest(store, provider, series, last, window_start=T0 + timedelta(hours=1))
        report = check_freshness(store, series, now=last + timedelta(hours=3))
        assert not report.stale  # strict ">" boundary
        assert check_freshness(store, series, now=last + timedelta(hours=3, seconds=1)).stale


class FlakyProvider:
    def __init__(self, descriptor, failures=3):
        self.descriptor = descriptor
        self.failures = failures
        self.calls = 0

    def fetch(self, series, window_start, window_end):
        self.calls += 1
        if self.calls <= self.failures:
            raise ProviderUnavailable("down")
        from forecast_arena.ingestion import RawBatch

        return RawBatch(series=series, points=[], pull_time=window_end, endpoint="flaky")


class TestScheduler:
    def test_pull_cadence_over_one_day(self, store):
        fast_series = make_series("fast", step_hours=1 / 60)  # 1-minute grid
        fast = synthetic_provider([fast_series], pull_interval=timedelta(minutes=5))
        slow = synthetic_provider([make_series("slow", provider="slow")],
                                  pull_interval=timedelta(hours=1))
        slow.descriptor = ProviderDescriptor(
            name="slow", kind="synthetic", series_catalog=slow.descriptor.series_catalog,
            rate_limit=600, pull_interval=timedelta(hours=1),
        )
        scheduler = IngestionScheduler(store, [fast, slow])
        clock = VirtualClock(T0)
        for _ in range(24 * 60):
            scheduler.tick(clock.now())
            clock.advance(timedelta(minutes=1))
        assert scheduler.pull_counts["synth"] == 288
        assert scheduler.pull_counts["slow"] == 24

    def test_failure_isolation(self, store):
        healthy = synthetic_provider(
            [make_series("ok", step_hours=1 / 12)], pull_interval=timedelta(minutes=5)
        )
        flaky_series = make_series("bad", provider="flaky", step_hours=1 / 12)
        flaky = FlakyProvider(
            ProviderDescriptor(
                name="flaky", kind="synthetic", series_catalog=(flaky_series,),
                rate_limit=600, pull_interval=timedelta(minutes=5),
            )
        )
        scheduler = IngestionScheduler(store, [healthy, flaky])
        clock = VirtualClock(T0)
        for _ in range(12):
            scheduler.tick(clock.now())
            clock.advance(timedelta(minutes=5))
        assert scheduler.pull_counts["synth"] == 12  # unaffected by flaky neighbour
        assert flaky.calls > 3  # retried past its failures

    def test_clock_jump_triggers_catchup(self, store):
        provider = synthetic_provider([make_series("s00")], pull_interval=timedelta(hours=1))
        scheduler = IngestionScheduler(store, [provider])
        scheduler.tick(T0)
        scheduler.tick(T0 + timedelta(hours=3))  # jump over 3 intervals
        assert scheduler.pull_counts["synth"] == 2
        # cadence resumes on the regular grid
        scheduler.tick(T0 + timedelta(hours=4))
        assert scheduler.pull_counts["synth"] == 3

    def test_rerun_of_schedule_reproduces_store(self):
        def run():
            store = Scd2Store()
            provider = synthetic_provider(
                [make_series("s00")], correction_rate=0.3, correction_offset=2.0
            )
            scheduler = IngestionScheduler(store, [provider])
            clock = VirtualClock(T0)
            for _ in range(48):
                scheduler.tick(clock.now())
                clock.advance(timedelta(hours=1))
            return store

        a, b = run(), run()
        series = make_series("s00")
        end = T0 + timedelta(hours=48)
        for et in [T0 + timedelta(hours=i) for i in range(48)]:
            assert a.value_as_of(series, et, end) == b.value_as_of(series, et, end)
            assert len(a.versions_of(series, et)) == len(b.versions_of(series, et))


class TestRateLimiter:
    def test_sliding_window_cap(self):
        limiter = RateLimiter(5)
        admitted = 0
        for i in range(10):
            if limiter.admit(T0 + timedelta(seconds=i)):
                admitted += 1
        assert admitted == 5
        # old admissions expire after a minute
        assert limiter.admit(T0 + timedelta(seconds=61))


class TestFixtureProvider:
    def test_reads_fixture_lines(self, tmp_path, store):
        fixture = tmp_path / "feed.txt"
        fixture.write_text(
            "# recorded feed\n"
            "s00,2026-01-01T01:00:00+01:00,42.5\n"
            "s00,2026-01-01T02:00:00+01:00,43.5\n"
        )
        series = make_series("s00", provider="stub", tz="Europe/Berlin")
        descriptor = ProviderDescriptor(
            name="stub", kind="http_stub", series_catalog=(series,),
            rate_limit=60, pull_interval=timedelta(hours=1),
        )
        provider = FixtureProvider(descriptor, str(fixture))
        report = pull_and_ingest(store, provider, series, T0 + timedelta(hours=2),
                                 window_start=T0)
        assert report.inserted == 2
        assert store.value_as_of(series, T0, T0 + timedelta(hours=2)) == 42.5
