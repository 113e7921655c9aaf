"""YAML config parsing for scenarios and the live service.

One schema describes providers, schedule, baselines and (for simulations)
scripted participants plus named assertions; `arena serve` and
`arena sim run` share everything except the clock source.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional

import yaml

from .baselines import BaselineConfig
from .errors import ScenarioInvalid
from .ingestion import FixtureProvider, Provider, ProviderDescriptor, SyntheticProvider
from .orchestration import BucketSchedule, ScheduleConfig
from .synthetic import SyntheticSeriesSpec
from .timebase import (
    BucketKey,
    Frequency,
    Scope,
    SeriesId,
    parse_duration,
    parse_rfc3339,
)


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    kind: str
    rate_limit: int
    pull_interval: timedelta
    lookback: Optional[timedelta]
    backfill: Optional[timedelta]
    synth_specs: tuple[SyntheticSeriesSpec, ...] = ()
    fixture_path: Optional[str] = None
    fixture_series: tuple[SeriesId, ...] = ()


@dataclass(frozen=True)
class ScriptedParticipant:
    name: str
    offset_from_tp: timedelta
    value: float


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    seed: int
    start: datetime
    duration: timedelta  # challenge planning span
    tick: timedelta
    providers: tuple[ProviderConfig, ...]
    schedule: ScheduleConfig
    baselines: tuple[BaselineConfig, ...] = ()
    scripted: tuple[ScriptedParticipant, ...] = ()
    assertions: tuple[dict, ...] = ()


@dataclass(frozen=True)
class ServerConfig:
    scenario: ScenarioSpec
    host: str = "127.0.0.1"
    port: int = 8000
    operator_token: str = "operator"
    clock_mode: str = "realtime"  # "realtime" | "virtual"
    store_log: Optional[str] = None
    audit_log: Optional[str] = None


def _parse_series(entry: dict, provider_name: str) -> tuple[SeriesId, SyntheticSeriesSpec]:
    frequency = parse_duration(entry["frequency"])
    series = SeriesId(
        provider=provider_name,
        external_id=str(entry["external_id"]),
        domain=entry.get("domain", "energy"),
        subdomain=entry.get("subdomain", "load"),
        native_frequency=frequency,
        display_name=entry.get("display_name", str(entry["external_id"])),
        original_timezone=entry.get("timezone", "UTC"),
    )
    spec = SyntheticSeriesSpec(
        series=series,
        base=float(entry.get("base", 100.0)),
        trend_per_step=float(entry.get("trend", 0.0)),
        seasonal_amplitude=float(entry.get("amplitude", 0.0)),
        seasonal_period=int(entry.get("period", 24)),
        noise_std=float(entry.get("noise", 0.0)),
        seed=int(entry.get("seed", 0)),
        emission_delay=parse_duration(entry.get("emission_delay", "PT0S")),
        correction_rate=float(entry.get("correction_rate", 0.0)),
        correction_offset=float(entry.get("correction_offset", 0.0)),
        correction_delay=parse_duration(entry.get("correction_delay", "PT1H")),
    )
    return series, spec


def _parse_provider(entry: dict) -> ProviderConfig:
    kind = entry.get("kind", "synthetic")
    if kind not in ("synthetic", "http_stub"):
        raise ScenarioInvalid(f"unknown provider kind {kind!r}")
    name = entry["name"]
    synth_specs = []
    fixture_series = []
    for raw in entry.get("series", ()):
        series, spec = _parse_series(raw, name)
        if kind == "synthetic":
            synth_specs.append(spec)
        else:
            fixture_series.append(series)
    return ProviderConfig(
        name=name,
        kind=kind,
        rate_limit=int(entry.get("rate_limit", 600)),
        pull_interval=parse_duration(entry.get("pull_interval", "PT1H")),
        lookback=parse_duration(entry["lookback"]) if "lookback" in entry else None,
        backfill=parse_duration(entry["backfill"]) if "backfill" in entry else None,
        synth_specs=tuple(synth_specs),
        fixture_path=entry.get("fixture_path"),
        fixture_series=tuple(fixture_series),
    )


def build_provider(cfg: ProviderConfig) -> Provider:
    if cfg.kind == "synthetic":
        catalog = tuple(s.series for s in cfg.synth_specs)
    else:
        catalog = cfg.fixture_series
    descriptor = ProviderDescriptor(
        name=cfg.name,
        kind=cfg.kind,
        series_catalog=catalog,
        rate_limit=cfg.rate_limit,
        pull_interval=cfg.pull_interval,
        lookback=cfg.lookback,
        backfill=cfg.backfill,
    )
    if cfg.kind == "synthetic":
        return SyntheticProvider(descriptor, {s.series.key: s for s in cfg.synth_specs})
    if cfg.fixture_path is None:
        raise ScenarioInvalid(f"http_stub provider {cfg.name} needs fixture_path")
    return FixtureProvider(descriptor, cfg.fixture_path)


def _parse_scope(entry: dict) -> Scope:
    return Scope(
        domain=entry.get("domain"),
        frequency=Frequency.parse(entry["frequency"]) if entry.get("frequency") else None,
        horizon=parse_duration(entry["horizon"]) if entry.get("horizon") else None,
    )


def _parse_bucket_schedule(entry: dict, default_seed: int) -> BucketSchedule:
    bucket = BucketKey(
        domain=entry.get("domain", "energy"),
        frequency=Frequency.parse(entry["frequency"]),
        horizon=parse_duration(entry["horizon"]),
    )
    return BucketSchedule(
        bucket=bucket,
        cadence_per_day=int(entry.get("cadence_per_day", 1)),
        selection_mode=entry.get("selection", "random"),
        k=int(entry.get("k", 10)),
        context_length=int(entry.get("context_length", 720)),
        registration_window=parse_duration(entry.get("registration_window", "PT1H")),
        announce_lead=parse_duration(entry.get("announce_lead", "PT1H")),
        phase=parse_duration(entry.get("phase", "PT3H")),
        grace_steps=int(entry.get("grace_steps", 6)),
        seed=int(entry.get("seed", default_seed)),
    )


def _parse_baseline(entry: dict) -> BaselineConfig:
    scopes = tuple(_parse_scope(s) for s in entry.get("scopes", ())) or (Scope(),)
    return BaselineConfig(
        kind=entry["kind"],
        window=int(entry.get("window", 24)),
        period=int(entry.get("period", 24)),
        periods_to_average=int(entry.get("periods_to_average", 4)),
        auto_enroll_scopes=scopes,
        name=entry.get("name"),
    )


def parse_scenario(data: dict, name: str = "scenario") -> ScenarioSpec:
    try:
        seed = int(data.get("seed", 0))
        spec = ScenarioSpec(
            name=data.get("name", name),
            seed=seed,
            start=parse_rfc3339(data["start"]),
            duration=parse_duration(data.get("duration", "P14D")),
            tick=parse_duration(data.get("tick", "PT15M")),
            providers=tuple(_parse_provider(p) for p in data.get("providers", ())),
            schedule=ScheduleConfig(
                buckets=tuple(
                    _parse_bucket_schedule(b, seed) for b in data.get("schedule", ())
                )
            ),
            baselines=tuple(_parse_baseline(b) for b in data.get("baselines", ())),
            scripted=tuple(
                ScriptedParticipant(
                    name=s["name"],
                    offset_from_tp=parse_duration(s["offset_from_tp"].lstrip("-"))
                    * (-1 if s["offset_from_tp"].startswith("-") else 1),
                    value=float(s.get("value", 0.0)),
                )
                for s in data.get("scripted", ())
            ),
            assertions=tuple(data.get("assertions", ())),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ScenarioInvalid(str(exc)) from exc
    if not spec.providers or not spec.schedule.buckets:
        raise ScenarioInvalid("scenario needs at least one provider and one schedule bucket")
    return spec


def load_scenario(path: str) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return parse_scenario(data, name=path)


def load_server_config(path: str) -> ServerConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    scenario = parse_scenario(data, name=path)
    server = data.get("server", {})
    return ServerConfig(
        scenario=scenario,
        host=server.get("host", "127.0.0.1"),
        port=int(server.get("port", 8000)),
        operator_token=server.get("operator_token", "operator"),
        clock_mode=server.get("clock", "realtime"),
        store_log=server.get("store_log"),
        audit_log=server.get("audit_log"),
    )
