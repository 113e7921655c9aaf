"""Shared vocabulary types and pure time/bucket arithmetic.

All timestamps are timezone-aware and normalized to UTC the moment they
enter the system; other zones exist only at ingestion and display
boundaries. Durations serialize as ISO-8601 (``PT15M``), timestamps as
RFC 3339 with an explicit ``Z``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Optional

from .errors import NonDivisible

UTC = timezone.utc

_DURATION_RE = re.compile(
    r"^P(?:(?P<days>\d+)D)?"
    r"(?:T(?:(?P<hours>\d+)H)?(?:(?P<minutes>\d+)M)?(?:(?P<seconds>\d+(?:\.\d+)?)S)?)?$"
)


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into a UTC-normalized aware datetime."""
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError(f"timestamp without offset: {text!r}")
    return ts.astimezone(UTC)


def format_rfc3339(ts: datetime) -> str:
    """Render a UTC timestamp with trailing 'Z'; sub-second only when present."""
    if ts.tzinfo is None:
        raise ValueError("naive datetime")
    ts = ts.astimezone(UTC)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%f").rstrip("0") + "Z"
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_duration(text: str) -> timedelta:
    m = _DURATION_RE.match(text)
    if not m or text in ("P", "PT"):
        raise ValueError(f"invalid ISO-8601 duration: {text!r}")
    parts = m.groupdict()
    if not any(v is not None for v in parts.values()):
        raise ValueError(f"invalid ISO-8601 duration: {text!r}")
    return timedelta(
        days=int(parts["days"] or 0),
        hours=int(parts["hours"] or 0),
        minutes=int(parts["minutes"] or 0),
        seconds=float(parts["seconds"] or 0),
    )


def format_duration(td: timedelta) -> str:
    total = td.total_seconds()
    if total < 0:
        raise ValueError("negative duration")
    days, rem = divmod(int(total), 86400)
    hours, rem = divmod(rem, 3600)
    minutes, seconds = divmod(rem, 60)
    frac = total - int(total)
    out = "P"
    if days:
        out += f"{days}D"
    time_part = ""
    if hours:
        time_part += f"{hours}H"
    if minutes:
        time_part += f"{minutes}M"
    if seconds or frac:
        sec = seconds + frac
        time_part += f"{sec:g}S" if frac else f"{seconds}S"
    if time_part:
        out += "T" + time_part
    if out == "P":
        out = "PT0S"
    return out


@dataclass(frozen=True)
class Frequency:
    """Grid spacing of a series or challenge (e.g. 15 minutes, hourly)."""

    step: timedelta

    def __post_init__(self):
        if self.step <= timedelta(0):
            raise ValueError("frequency step must be positive")

    @property
    def iso(self) -> str:
        return format_duration(self.step)

    @classmethod
    def parse(cls, text: str) -> "Frequency":
        return cls(parse_duration(text))


@dataclass(frozen=True)
class SeriesId:
    """Identity and fixed metadata of one observed series.

    (provider, external_id) is globally unique; original_timezone is the
    IANA zone of the provider's raw stamps, kept purely as metadata.
    """

    provider: str
    external_id: str
    domain: str
    subdomain: str
    native_frequency: timedelta
    display_name: str
    original_timezone: str

    def __post_init__(self):
        if self.native_frequency <= timedelta(0):
            raise ValueError("native_frequency must be positive")

    @property
    def key(self) -> tuple[str, str]:
        return (self.provider, self.external_id)


@dataclass(frozen=True)
class BucketKey:
    """Challenges with identical (domain, frequency, horizon) share a bucket."""

    domain: str
    frequency: Frequency
    horizon: timedelta

    def slug(self) -> str:
        return f"{self.domain}-{self.frequency.iso}-{format_duration(self.horizon)}".lower()


@dataclass(frozen=True)
class Scope:
    """Optional (domain, frequency, horizon) filter; empty scope matches all."""

    domain: Optional[str] = None
    frequency: Optional[Frequency] = None
    horizon: Optional[timedelta] = None

    def matches(self, bucket: BucketKey) -> bool:
        if self.domain is not None and self.domain != bucket.domain:
            return False
        if self.frequency is not None and self.frequency != bucket.frequency:
            return False
        if self.horizon is not None and self.horizon != bucket.horizon:
            return False
        return True


def horizon_steps(horizon: timedelta, frequency: Frequency) -> int:
    """Number of grid steps covering `horizon` at `frequency`.

    Raises NonDivisible unless the step divides the horizon exactly.
    """
    step_s = frequency.step.total_seconds()
    horizon_s = horizon.total_seconds()
    steps = horizon_s / step_s
    if steps != int(steps) or steps < 1:
        raise NonDivisible(
            f"horizon {format_duration(horizon)} is not a positive multiple "
            f"of step {frequency.iso}"
        )
    return int(steps)


def horizon_grid(t_p: datetime, frequency: Frequency, h: int) -> list[datetime]:
    """The h future grid points (t_p + step, ..., t_p + h*step], strictly increasing."""
    if h < 1:
        raise ValueError("h must be >= 1")
    return [t_p + frequency.step * i for i in range(1, h + 1)]
