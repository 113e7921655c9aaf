"""Clock injection seam: the same service code runs under real or virtual time."""

from __future__ import annotations

import threading
import time
from datetime import datetime, timedelta
from typing import Protocol

from .timebase import UTC


class Clock(Protocol):
    def now(self) -> datetime: ...


class RealClock:
    """Wall clock, always UTC."""

    def now(self) -> datetime:
        return datetime.now(tz=UTC)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Stepped clock for deterministic simulation; advances only explicitly."""

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            raise ValueError("virtual clock start must be timezone-aware")
        self._now = start.astimezone(UTC)
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def advance(self, delta: timedelta) -> datetime:
        if delta < timedelta(0):
            raise ValueError("virtual time is monotone; cannot go backwards")
        with self._lock:
            self._now = self._now + delta
            return self._now

    def advance_to(self, target: datetime) -> datetime:
        with self._lock:
            target = target.astimezone(UTC)
            if target < self._now:
                raise ValueError("virtual time is monotone; cannot go backwards")
            self._now = target
            return self._now
