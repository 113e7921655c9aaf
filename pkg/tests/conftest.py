from datetime import datetime, timedelta

import pytest

from forecast_arena.clock import VirtualClock
from forecast_arena.config import parse_scenario
from forecast_arena.simulation import PlatformRunner
from forecast_arena.store import Provenance, Scd2Store
from forecast_arena.timebase import UTC, SeriesId


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=UTC)


T0 = utc(2026, 1, 1)


def make_series(external_id="s00", provider="synth", domain="energy",
                subdomain="load", step_hours=1.0, tz="UTC") -> SeriesId:
    return SeriesId(
        provider=provider,
        external_id=external_id,
        domain=domain,
        subdomain=subdomain,
        native_frequency=timedelta(hours=step_hours),
        display_name=f"Series {external_id}",
        original_timezone=tz,
    )


def make_provenance(pull_time=None) -> Provenance:
    return Provenance(provider="synth", endpoint="test", pull_time=pull_time or T0)


def scenario_data(
    n_series=12,
    duration="P2D",
    cadence=4,
    k=10,
    amplitude=25.0,
    period=7,
    noise=0.0,
    seed=7,
    emission_delay="PT5M",
    baselines=(),
    scripted=(),
    assertions=(),
    context_length=720,
    **schedule_overrides,
):
    schedule = {
        "domain": "energy",
        "frequency": "PT1H",
        "horizon": "PT24H",
        "cadence_per_day": cadence,
        "k": k,
        "context_length": context_length,
        "phase": "PT3H",
    }
    schedule.update(schedule_overrides)
    return {
        "seed": seed,
        "start": "2026-01-01T00:00:00Z",
        "duration": duration,
        "tick": "PT15M",
        "providers": [{
            "name": "synth",
            "kind": "synthetic",
            "pull_interval": "PT1H",
            "rate_limit": 600,
            "backfill": "P32D",
            "series": [
                {
                    "external_id": f"s{i:02d}",
                    "frequency": "PT1H",
                    "base": 100.0 + i,
                    "amplitude": amplitude,
                    "period": period,
                    "noise": noise,
                    "seed": i,
                    "emission_delay": emission_delay,
                }
                for i in range(n_series)
            ],
        }],
        "schedule": [schedule],
        "baselines": list(baselines),
        "scripted": list(scripted),
        "assertions": list(assertions),
    }


def make_runner(**kwargs) -> PlatformRunner:
    runner = PlatformRunner(parse_scenario(scenario_data(**kwargs)))
    runner.bootstrap()
    runner.tick()
    return runner


def first_challenge(runner):
    cid = sorted(runner.service.orchestrator.challenges)[0]
    return runner.service.orchestrator.challenges[cid]


def advance_to(runner, target):
    """Tick the runner forward until the virtual clock reaches target."""
    runner.advance(target - runner.clock.now())


@pytest.fixture
def store():
    return Scd2Store()


@pytest.fixture
def clocked_store():
    clock = VirtualClock(T0)
    return Scd2Store(clock=clock), clock
