import random
from datetime import timedelta

import pytest

from forecast_arena.errors import ClockRegression, UnknownSeries
from forecast_arena.store import Provenance, Scd2Store, UpsertOutcome

from conftest import T0, make_provenance, make_series

S = make_series("load-1")
T = T0
T1, T2, T3 = T0 + timedelta(hours=1), T0 + timedelta(hours=2), T0 + timedelta(hours=3)


def scripted_store():
    store = Scd2Store()
    store.upsert(S, T, 100.0, make_provenance(), tx_time=T1)
    return store


class TestUpsert:
    def test_first_write_inserts(self):
        store = Scd2Store()
        assert store.upsert(S, T, 100.0, make_provenance(), tx_time=T1) is UpsertOutcome.INSERTED

    def test_identical_write_is_noop(self):
        store = scripted_store()
        assert store.upsert(S, T, 100.0, make_provenance(), tx_time=T2) is UpsertOutcome.NOOP
        assert len(store.versions_of(S, T)) == 1

    def test_corrected_write_supersedes(self):
        store = scripted_store()
        assert store.upsert(S, T, 105.0, make_provenance(), tx_time=T3) is UpsertOutcome.SUPERSEDED
        versions = store.versions_of(S, T)
        assert versions[0].valid_to == T3
        assert versions[1].valid_to is None
        assert versions[1].valid_from == versions[1].created_at == T3

    def test_clock_regression_rejected(self):
        store = scripted_store()
        with pytest.raises(ClockRegression):
            store.upsert(S, T, 101.0, make_provenance(), tx_time=T0)


class TestAsOf:
    def test_correction_not_yet_visible(self):
        store = scripted_store()
        store.upsert(S, T, 105.0, make_provenance(), tx_time=T3)
        view = store.as_of(S, T, T, tx_time=T2)
        assert view.points == ((T, 100.0),)

    def test_correction_visible_at_its_tx(self):
        store = scripted_store()
        store.upsert(S, T, 105.0, make_provenance(), tx_time=T3)
        assert store.as_of(S, T, T, tx_time=T3).points == ((T, 105.0),)

    def test_unknown_series(self):
        store = Scd2Store()
        with pytest.raises(UnknownSeries):
            store.as_of(make_series("nope"), T, T, tx_time=T1)

    def test_gaps_are_omitted(self):
        store = scripted_store()
        view = store.as_of(S, T - timedelta(hours=5), T + timedelta(hours=5), tx_time=T2)
        assert view.points == ((T, 100.0),)


class TestLatestEventTime:
    def test_empty_series(self):
        store = Scd2Store()
        store.register_series(S)
        assert store.latest_event_time(S, tx_time=T1) is None

    def test_maximum_visible(self):
        store = scripted_store()
        store.upsert(S, T + timedelta(hours=1), 50.0, make_provenance(), tx_time=T2)
        assert store.latest_event_time(S, tx_time=T2) == T + timedelta(hours=1)

    def test_future_created_invisible(self):
        store = scripted_store()
        store.upsert(S, T + timedelta(hours=1), 50.0, make_provenance(), tx_time=T3)
        assert store.latest_event_time(S, tx_time=T2) == T


def random_schedule(seed, n_ops=40, n_events=6):
    """Monotone-tx random upsert schedule over a handful of event times."""
    rng = random.Random(seed)
    events = [T0 + timedelta(hours=i) for i in range(n_events)]
    tx = T0
    schedule = []
    for _ in range(n_ops):
        tx = tx + timedelta(minutes=rng.randint(0, 30))
        schedule.append((tx, rng.choice(events), float(rng.randint(0, 5))))
    return schedule


def replay_oracle(schedule, event_time, tx_query):
    """Linear scan: last write for event_time with tx <= query time wins."""
    value = None
    for tx, et, v in schedule:
        if et == event_time and tx <= tx_query:
            value = v
    return value


class TestReplayOracle:
    def test_randomized_schedules_match_oracle(self):
        for seed in range(100):
            schedule = random_schedule(seed)
            store = Scd2Store()
            for tx, et, v in schedule:
                store.upsert(S, et, v, make_provenance(), tx_time=tx)
            rng = random.Random(1000 + seed)
            for _ in range(10):
                q = T0 + timedelta(minutes=rng.randint(0, 40 * 30))
                for et in {e for _, e, _ in schedule}:
                    expected = replay_oracle(schedule, et, q)
                    got = store.value_as_of(S, et, q)
                    assert got == expected


class TestInvariants:
    def test_validity_intervals_disjoint(self):
        for seed in range(50):
            store = Scd2Store()
            schedule = random_schedule(seed)
            for tx, et, v in schedule:
                store.upsert(S, et, v, make_provenance(), tx_time=tx)
            for et in {e for _, e, _ in schedule}:
                versions = store.versions_of(S, et)
                open_ended = [v for v in versions if v.valid_to is None]
                assert len(open_ended) <= 1
                intervals = sorted(
                    (v.valid_from, v.valid_to) for v in versions
                )
                for (_, prev_to), (next_from, _) in zip(intervals, intervals[1:]):
                    assert prev_to is not None and prev_to <= next_from

    def test_monotone_visibility(self):
        store = scripted_store()
        assert store.value_as_of(S, T, T1) == store.value_as_of(S, T, T2) == 100.0

    def test_retroactive_correction_never_alters_earlier_views(self):
        store = scripted_store()
        before = store.as_of(S, T, T, tx_time=T2)
        store.upsert(S, T, 999.0, make_provenance(), tx_time=T3)
        assert store.as_of(S, T, T, tx_time=T2) == before


class TestDurability:
    def test_log_replay_reproduces_state(self, tmp_path):
        path = str(tmp_path / "store.jsonl")
        store = Scd2Store(log_path=path)
        schedule = random_schedule(3)
        for tx, et, v in schedule:
            store.upsert(S, et, v, make_provenance(), tx_time=tx)
        store.close()

        reborn = Scd2Store(log_path=path)
        q = T0 + timedelta(hours=25)
        for et in {e for _, e, _ in schedule}:
            assert reborn.value_as_of(S, et, q) == store.value_as_of(S, et, q)
            assert len(reborn.versions_of(S, et)) == len(store.versions_of(S, et))
