"""Deterministic synthetic feeds: trend + seasonality + seeded noise,
with optional delayed emission and later corrections.

Generation is a pure function of (spec, event_time); two calls with the
same arguments always agree, which is what makes whole-platform runs
reproducible down to the byte.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional

from .errors import OffGrid
from .timebase import UTC, SeriesId, format_rfc3339

GRID_EPOCH = datetime(2000, 1, 1, tzinfo=UTC)


@dataclass(frozen=True)
class SyntheticSeriesSpec:
    series: SeriesId
    base: float = 100.0
    trend_per_step: float = 0.0
    seasonal_amplitude: float = 0.0
    seasonal_period: int = 24
    noise_std: float = 0.0
    seed: int = 0
    emission_delay: timedelta = timedelta(0)
    correction_rate: float = 0.0
    correction_offset: float = 0.0
    correction_delay: timedelta = timedelta(hours=1)

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not 0.0 <= self.correction_rate <= 1.0:
            raise ValueError("correction_rate must be in [0, 1]")
        if self.seasonal_period < 1:
            raise ValueError("seasonal_period must be >= 1")


def grid_position(spec: SyntheticSeriesSpec, event_time: datetime) -> int:
    """Integer step index of event_time on the series grid; OffGrid otherwise."""
    delta = (event_time - GRID_EPOCH).total_seconds()
    step = spec.series.native_frequency.total_seconds()
    pos = delta / step
    if pos != int(pos):
        raise OffGrid(f"{format_rfc3339(event_time)} not on the {step:g}s grid")
    return int(pos)


def _noise(spec: SyntheticSeriesSpec, event_time: datetime) -> float:
    if spec.noise_std == 0.0:
        return 0.0
    rng = random.Random(f"{spec.seed}:noise:{format_rfc3339(event_time)}")
    return rng.gauss(0.0, spec.noise_std)


def generate(spec: SyntheticSeriesSpec, event_time: datetime) -> float:
    """The true (final) value of the series at event_time."""
    pos = grid_position(spec, event_time)
    seasonal = spec.seasonal_amplitude * math.sin(
        2.0 * math.pi * (pos % spec.seasonal_period) / spec.seasonal_period
    )
    return spec.base + spec.trend_per_step * pos + seasonal + _noise(spec, event_time)


def is_corrected(spec: SyntheticSeriesSpec, event_time: datetime) -> bool:
    if spec.correction_rate == 0.0:
        return False
    rng = random.Random(f"{spec.seed}:corr:{format_rfc3339(event_time)}")
    return rng.random() < spec.correction_rate


def available_at(spec: SyntheticSeriesSpec, event_time: datetime) -> datetime:
    """When the first (possibly provisional) value becomes pullable."""
    return event_time + spec.emission_delay


def emitted_value(
    spec: SyntheticSeriesSpec, event_time: datetime, as_of: datetime
) -> Optional[float]:
    """The value a pull at time `as_of` would see, or None if not yet emitted.

    Corrected points are first emitted with the offset applied and revert
    to the true value once the correction delay has elapsed, so repeated
    pulls naturally produce supersede events in the store.
    """
    if as_of < available_at(spec, event_time):
        return None
    true_value = generate(spec, event_time)
    if is_corrected(spec, event_time):
        corrected_from = available_at(spec, event_time) + spec.correction_delay
        if as_of < corrected_from:
            return true_value + spec.correction_offset
    return true_value
