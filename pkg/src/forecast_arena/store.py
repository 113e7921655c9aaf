"""Append-only bitemporal (SCD2) store.

Each (series, event_time) key holds a chain of versions with disjoint
transaction-time validity intervals [valid_from, valid_to). Rows are never
mutated except for closing valid_to exactly once; "what was known when"
is answered by as-of queries against the validity intervals.

Durability is a line-delimited JSON log of upsert events; startup replay
reproduces the in-memory index bit-exactly.
"""

from __future__ import annotations

import json
import os
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional

from .errors import ClockRegression, UnknownSeries
from .timebase import SeriesId, format_rfc3339, parse_rfc3339


@dataclass(frozen=True)
class Provenance:
    provider: str
    endpoint: str
    pull_time: datetime

    def __post_init__(self):
        if not self.provider or not self.endpoint:
            raise ValueError("provenance fields must be non-empty")


@dataclass
class VersionedObservation:
    series: SeriesId
    event_time: datetime
    value: float
    valid_from: datetime
    valid_to: Optional[datetime]
    created_at: datetime
    provenance: Provenance


@dataclass(frozen=True)
class AsOfView:
    series: SeriesId
    tx_time: datetime
    points: tuple[tuple[datetime, float], ...]


class UpsertOutcome(str, Enum):
    INSERTED = "inserted"
    SUPERSEDED = "superseded"
    NOOP = "noop"


@dataclass
class _SeriesState:
    series: SeriesId
    # version chains per event_time, ordered by valid_from
    versions: dict[datetime, list[VersionedObservation]] = field(default_factory=dict)
    event_times: list[datetime] = field(default_factory=list)  # sorted


def _same_value(a: float, b: float) -> bool:
    # Idempotence uses exact decimal-serialization equality, never a tolerance.
    return repr(float(a)) == repr(float(b))


class Scd2Store:
    """Single-writer bitemporal store with optional durable JSONL log."""

    def __init__(self, clock=None, log_path: Optional[str] = None):
        self._clock = clock
        self._log_path = log_path
        self._log_file = None
        self._states: dict[tuple[str, str], _SeriesState] = {}
        self._last_tx: Optional[datetime] = None
        if log_path and os.path.exists(log_path):
            self._replay_log(log_path)
        if log_path:
            self._log_file = open(log_path, "a", encoding="utf-8")

    # -- series registry ----------------------------------------------------

    def register_series(self, series: SeriesId) -> None:
        if series.key not in self._states:
            self._states[series.key] = _SeriesState(series)

    def known(self, series: SeriesId) -> bool:
        return series.key in self._states

    def series_list(self) -> list[SeriesId]:
        return [s.series for s in self._states.values()]

    def _state(self, series: SeriesId) -> _SeriesState:
        try:
            return self._states[series.key]
        except KeyError:
            raise UnknownSeries(f"{series.provider}/{series.external_id}") from None

    # -- writes ---------------------------------------------------------------

    def upsert(
        self,
        series: SeriesId,
        event_time: datetime,
        value: float,
        provenance: Provenance,
        tx_time: Optional[datetime] = None,
    ) -> UpsertOutcome:
        """Insert or supersede the current version of (series, event_time).

        tx_time is normally assigned from the platform clock at admission;
        an explicit tx_time is accepted for log replay and tests but must
        not regress behind the current version.
        """
        self.register_series(series)
        if tx_time is None:
            if self._clock is None:
                raise ValueError("no clock configured and no explicit tx_time")
            tx_time = self._clock.now()
        if self._last_tx is not None and tx_time < self._last_tx:
            raise ClockRegression(
                f"tx_time {format_rfc3339(tx_time)} behind store clock "
                f"{format_rfc3339(self._last_tx)}"
            )

        state = self._states[series.key]
        chain = state.versions.get(event_time)
        current = chain[-1] if chain and chain[-1].valid_to is None else None

        if current is not None and tx_time < current.valid_from:
            raise ClockRegression("tx_time precedes current version's valid_from")

        if current is not None and _same_value(current.value, value):
            outcome = UpsertOutcome.NOOP
        else:
            if current is not None:
                current.valid_to = tx_time
                outcome = UpsertOutcome.SUPERSEDED
            else:
                outcome = UpsertOutcome.INSERTED
            version = VersionedObservation(
                series=series,
                event_time=event_time,
                value=float(value),
                valid_from=tx_time,
                valid_to=None,
                created_at=tx_time,
                provenance=provenance,
            )
            if chain is None:
                state.versions[event_time] = [version]
                insort(state.event_times, event_time)
            else:
                chain.append(version)

        self._last_tx = tx_time
        if self._log_file is not None:
            self._log_file.write(self._encode(series, event_time, value, provenance, tx_time))
        return outcome

    def flush(self) -> None:
        if self._log_file is not None:
            self._log_file.flush()
            os.fsync(self._log_file.fileno())

    def close(self) -> None:
        if self._log_file is not None:
            self.flush()
            self._log_file.close()
            self._log_file = None

    # -- reads ----------------------------------------------------------------

    def _visible(self, chain: list[VersionedObservation], tx_time: datetime):
        for version in reversed(chain):
            if version.valid_from <= tx_time and (
                version.valid_to is None or tx_time < version.valid_to
            ):
                return version
        return None

    def as_of(
        self,
        series: SeriesId,
        event_start: datetime,
        event_end: datetime,
        tx_time: datetime,
    ) -> AsOfView:
        """Values visible at tx_time for event_time in [event_start, event_end].

        Event times with no visible version are omitted; gaps are never imputed.
        """
        state = self._state(series)
        lo = bisect_left(state.event_times, event_start)
        points = []
        for et in state.event_times[lo:]:
            if et > event_end:
                break
            version = self._visible(state.versions[et], tx_time)
            if version is not None:
                points.append((et, version.value))
        return AsOfView(series=series, tx_time=tx_time, points=tuple(points))

    def value_as_of(
        self, series: SeriesId, event_time: datetime, tx_time: datetime
    ) -> Optional[float]:
        state = self._state(series)
        chain = state.versions.get(event_time)
        if not chain:
            return None
        version = self._visible(chain, tx_time)
        return None if version is None else version.value

    def latest_event_time(self, series: SeriesId, tx_time: datetime) -> Optional[datetime]:
        state = self._state(series)
        for et in reversed(state.event_times):
            if self._visible(state.versions[et], tx_time) is not None:
                return et
        return None

    def versions_of(self, series: SeriesId, event_time: datetime) -> list[VersionedObservation]:
        return list(self._state(series).versions.get(event_time, ()))

    # -- durability -------------------------------------------------------------

    @staticmethod
    def _encode(series, event_time, value, provenance, tx_time) -> str:
        record = {
            "provider": series.provider,
            "external_id": series.external_id,
            "domain": series.domain,
            "subdomain": series.subdomain,
            "native_frequency_s": series.native_frequency.total_seconds(),
            "display_name": series.display_name,
            "original_timezone": series.original_timezone,
            "event_time": format_rfc3339(event_time),
            "value": float(value),
            "tx_time": format_rfc3339(tx_time),
            "prov_endpoint": provenance.endpoint,
            "prov_provider": provenance.provider,
            "prov_pull_time": format_rfc3339(provenance.pull_time),
        }
        return json.dumps(record, sort_keys=True) + "\n"

    def _replay_log(self, path: str) -> None:
        from datetime import timedelta

        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                series = SeriesId(
                    provider=rec["provider"],
                    external_id=rec["external_id"],
                    domain=rec["domain"],
                    subdomain=rec["subdomain"],
                    native_frequency=timedelta(seconds=rec["native_frequency_s"]),
                    display_name=rec["display_name"],
                    original_timezone=rec["original_timezone"],
                )
                provenance = Provenance(
                    provider=rec["prov_provider"],
                    endpoint=rec["prov_endpoint"],
                    pull_time=parse_rfc3339(rec["prov_pull_time"]),
                )
                self.upsert(
                    series,
                    parse_rfc3339(rec["event_time"]),
                    rec["value"],
                    provenance,
                    tx_time=parse_rfc3339(rec["tx_time"]),
                )
