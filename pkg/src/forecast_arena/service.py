"""Gateway core: model registry, context serving, pre-registered submission,
audit trail and leaderboard queries.

Every read of "now" and every admission decision uses the injected server
clock; client-supplied times are recorded for audit only. HTTP handlers,
baseline agents and the simulation harness all call these same methods, so
context parity between internal and external participants holds by
construction.
"""

from __future__ import annotations

import logging
import secrets as _secrets
import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from math import isfinite
from typing import Optional

from .errors import (
    DeadlinePassed,
    InvalidApiKey,
    MissingDisclosure,
    NonFiniteValue,
    NotInRegistration,
    RateLimited,
    Unauthorized,
    UnknownAlias,
    UnknownModel,
    WrongLength,
)
from .evaluation import EvaluationEngine
from .ingestion import IngestionScheduler, Provider, RateLimiter, check_freshness
from .leaderboard import LeaderboardEntry, Window, compute as compute_leaderboard
from .orchestration import (
    Challenge,
    Orchestrator,
    ScheduleConfig,
    plan_challenges,
)
from .store import Scd2Store
from .timebase import (
    BucketKey,
    Scope,
    SeriesId,
    format_duration,
    format_rfc3339,
)

logger = logging.getLogger(__name__)

DEFAULT_KEY_RATE_LIMIT = 60  # requests per minute per api key
LEADERBOARD_CACHE_TTL_S = 30.0


@dataclass(frozen=True)
class ModelCard:
    model_id: str
    declared_name_version: str
    architecture_class: str
    approx_size: str
    external_data_used: bool
    mode: str  # "containerized" | "byop"
    registered_at: datetime


@dataclass(frozen=True)
class ApiKey:
    key: str
    model_id: str
    rate_limit: int


@dataclass(frozen=True)
class ContextPayload:
    challenge_id: str
    series_alias: str
    frequency: str  # ISO duration
    points: tuple[tuple[datetime, float], ...]
    served_at: datetime
    t_p: datetime
    horizon_h: int


@dataclass
class ForecastSubmission:
    challenge_id: str
    series_alias: str
    model_id: str
    values: list[float]
    client_submit_time: Optional[datetime]
    received_at: datetime
    external_data_used: bool
    true_series: SeriesId  # resolved server-side; never serialized before reveal


@dataclass(frozen=True)
class Receipt:
    received_at: datetime
    accepted: bool


class ArenaService:
    def __init__(
        self,
        clock,
        store: Scd2Store,
        providers: list[Provider],
        schedule: ScheduleConfig,
        secret: bytes,
        operator_token: str,
        staleness_steps: int = 3,
        key_rate_limit: int = DEFAULT_KEY_RATE_LIMIT,
        key_rng: Optional[random.Random] = None,
        audit_log_path: Optional[str] = None,
    ):
        self.clock = clock
        self.store = store
        self.schedule = schedule
        self.operator_token = operator_token
        self.staleness_steps = staleness_steps
        self.key_rate_limit = key_rate_limit
        self._key_rng = key_rng

        self.scheduler = IngestionScheduler(store, providers)
        self.evaluation = EvaluationEngine(store)
        self.orchestrator = Orchestrator(
            store=store,
            evaluation=self.evaluation,
            secret=secret,
            eligible_series=self.eligible_series,
            submissions_for=self.submissions_for,
        )

        self.models: dict[str, ModelCard] = {}
        self.api_keys: dict[str, ApiKey] = {}
        self._key_limiters: dict[str, RateLimiter] = {}
        self._model_counter = 0
        # latest accepted submission per (challenge, alias, model)
        self.submissions: dict[tuple[str, str, str], ForecastSubmission] = {}
        self._audit: dict[str, list[dict]] = {}
        self._audit_file = open(audit_log_path, "a", encoding="utf-8") if audit_log_path else None
        self._leaderboard_cache: dict[tuple, tuple[datetime, list[LeaderboardEntry]]] = {}

    # -- plumbing ---------------------------------------------------------------

    def now(self) -> datetime:
        return self.clock.now()

    def eligible_series(self, bucket: BucketKey, now: datetime) -> list[SeriesId]:
        out = []
        for series in self.store.series_list():
            if series.domain != bucket.domain:
                continue
            if series.native_frequency != bucket.frequency.step:
                continue
            if check_freshness(self.store, series, now, self.staleness_steps).stale:
                continue
            out.append(series)
        return out

    def submissions_for(self, challenge_id: str) -> list[ForecastSubmission]:
        subs = [s for (cid, _, _), s in self.submissions.items() if cid == challenge_id]
        subs.sort(key=lambda s: (s.model_id, s.series_alias))
        return subs

    def plan(self, window_start: datetime, window_end: datetime) -> int:
        specs = plan_challenges(
            self.schedule,
            window_start,
            window_end,
            eligible_count=lambda b: len(self.eligible_series(b, self.now())),
        )
        self.orchestrator.add_specs(specs)
        return len(specs)

    def tick(self, now: Optional[datetime] = None) -> None:
        now = now or self.now()
        self.scheduler.tick(now)
        self.orchestrator.tick(now)

    def _audit_event(self, challenge_id: str, event: dict) -> None:
        self._audit.setdefault(challenge_id, []).append(event)
        if self._audit_file is not None:
            import json

            self._audit_file.write(json.dumps(event, sort_keys=True, default=str) + "\n")
            self._audit_file.flush()

    # -- model registry ------------------------------------------------------------

    def register_model(
        self,
        declared_name_version: str,
        architecture_class: str,
        approx_size: str,
        external_data_used: Optional[bool],
        mode: str,
    ) -> tuple[ModelCard, ApiKey]:
        for name, value in (
            ("declared_name_version", declared_name_version),
            ("architecture_class", architecture_class),
            ("approx_size", approx_size),
        ):
            if value is None or str(value).strip() == "":
                raise MissingDisclosure(name)
        if external_data_used is None:
            raise MissingDisclosure("external_data_used")
        if mode not in ("containerized", "byop"):
            raise ValueError(f"unknown participation mode {mode!r}")
        self._model_counter += 1
        model_id = f"m{self._model_counter:04d}"
        card = ModelCard(
            model_id=model_id,
            declared_name_version=declared_name_version,
            architecture_class=architecture_class,
            approx_size=str(approx_size),
            external_data_used=bool(external_data_used),
            mode=mode,
            registered_at=self.now(),
        )
        if self._key_rng is not None:
            token = f"{self._key_rng.getrandbits(128):032x}"
        else:
            token = _secrets.token_hex(16)
        key = ApiKey(key=token, model_id=model_id, rate_limit=self.key_rate_limit)
        self.models[model_id] = card
        self.api_keys[token] = key
        self._key_limiters[token] = RateLimiter(key.rate_limit)
        return card, key

    def get_model(self, model_id: str) -> ModelCard:
        try:
            return self.models[model_id]
        except KeyError:
            raise UnknownModel(model_id) from None

    def _authenticate(self, api_key: str) -> ApiKey:
        try:
            key = self.api_keys[api_key]
        except KeyError:
            raise InvalidApiKey("unknown api key") from None
        now = self.now()
        limiter = self._key_limiters[api_key]
        if not limiter.admit(now):
            raise RateLimited(limiter.retry_after(now))
        return key

    # -- challenge listing -----------------------------------------------------------

    def _summary(self, challenge: Challenge, now: datetime) -> dict:
        spec = challenge.spec
        stage = self.orchestrator.stage_for(challenge, now)
        revealed = stage in ("active", "closed")
        summary = {
            "challenge_id": spec.challenge_id,
            "bucket": {
                "domain": spec.bucket.domain,
                "frequency": spec.bucket.frequency.iso,
                "horizon": format_duration(spec.bucket.horizon),
            },
            "bucket_key": spec.bucket,
            "stage": challenge.stage if challenge.stage == "closed" else stage,
            "t_p": spec.t_p,
            "announce_at": spec.announce_at,
            "registration_open_at": spec.registration_open_at,
            "context_length": spec.context_length,
            "horizon_h": spec.horizon_h,
            "selection_mode": spec.selection.mode,
            "aliases": [a.alias for a in challenge.aliases or ()],
        }
        if revealed:
            summary["series"] = [
                {
                    "alias": a.alias,
                    "provider": a.true_series.provider,
                    "external_id": a.true_series.external_id,
                    "display_name": a.true_series.display_name,
                }
                for a in challenge.aliases or ()
            ]
        return summary

    def list_challenges(
        self, state: Optional[str] = None, scope: Optional[Scope] = None
    ) -> list[dict]:
        now = self.now()
        out = []
        for challenge in self.orchestrator.open_for(now):
            if scope is not None and not scope.matches(challenge.spec.bucket):
                continue
            summary = self._summary(challenge, now)
            if state is not None and summary["stage"] != state:
                continue
            out.append(summary)
        out.sort(key=lambda s: (s["t_p"], s["challenge_id"]))
        return out

    def challenge_detail(self, challenge_id: str) -> dict:
        challenge = self.orchestrator.get(challenge_id)
        return self._summary(challenge, self.now())

    # -- context serving ----------------------------------------------------------------

    def get_context(self, api_key: str, challenge_id: str, series_alias: str) -> ContextPayload:
        key = self._authenticate(api_key)
        challenge = self.orchestrator.get(challenge_id)
        served_at = self.now()
        stage = self.orchestrator.stage_for(challenge, served_at)
        if stage != "registration":
            raise NotInRegistration(f"{challenge_id} is in stage {stage}")
        alias = challenge.lookup_alias(series_alias)
        if alias is None:
            raise UnknownAlias(series_alias)
        spec = challenge.spec
        step = spec.bucket.frequency.step
        view = self.store.as_of(
            alias.true_series,
            spec.t_p - spec.context_length * step,
            spec.t_p,
            tx_time=served_at,
        )
        points = tuple(view.points[-spec.context_length:])
        payload = ContextPayload(
            challenge_id=challenge_id,
            series_alias=series_alias,
            frequency=spec.bucket.frequency.iso,
            points=points,
            served_at=served_at,
            t_p=spec.t_p,
            horizon_h=spec.horizon_h,
        )
        self._audit_event(challenge_id, {
            "type": "context_served",
            "challenge_id": challenge_id,
            "series_alias": series_alias,
            "model_id": key.model_id,
            "served_at": format_rfc3339(served_at),
            "n_points": len(points),
            "t_p": format_rfc3339(spec.t_p),
        })
        return payload

    # -- submission --------------------------------------------------------------------

    def submit_forecast(
        self,
        api_key: str,
        challenge_id: str,
        series_alias: str,
        values: list[float],
        client_submit_time: Optional[datetime] = None,
        external_data_used: bool = False,
    ) -> Receipt:
        key = self._authenticate(api_key)
        challenge = self.orchestrator.get(challenge_id)
        spec = challenge.spec
        received_at = self.now()  # server clock is the single timing authority
        alias = challenge.lookup_alias(series_alias)
        if alias is None:
            raise UnknownAlias(series_alias)

        def reject(error: str):
            self._audit_event(challenge_id, {
                "type": "submission_rejected",
                "challenge_id": challenge_id,
                "series_alias": series_alias,
                "model_id": key.model_id,
                "received_at": format_rfc3339(received_at),
                "client_submit_time": (
                    format_rfc3339(client_submit_time) if client_submit_time else None
                ),
                "error": error,
            })

        if received_at > spec.t_p:
            reject("DeadlinePassed")
            raise DeadlinePassed(
                f"received at {format_rfc3339(received_at)}, deadline {format_rfc3339(spec.t_p)}"
            )
        if received_at < spec.registration_open_at:
            reject("NotInRegistration")
            raise NotInRegistration(f"registration opens {format_rfc3339(spec.registration_open_at)}")
        if len(values) != spec.horizon_h:
            reject("WrongLength")
            raise WrongLength(expected=spec.horizon_h, got=len(values))
        if not all(isfinite(v) for v in values):
            reject("NonFiniteValue")
            raise NonFiniteValue("forecast values must be finite")
        # defense in depth: the looser published bound must also hold
        assert received_at < spec.t_p + spec.bucket.frequency.step

        submission = ForecastSubmission(
            challenge_id=challenge_id,
            series_alias=series_alias,
            model_id=key.model_id,
            values=[float(v) for v in values],
            client_submit_time=client_submit_time,
            received_at=received_at,
            external_data_used=external_data_used,
            true_series=alias.true_series,
        )
        # resubmission before the deadline replaces atomically
        self.submissions[(challenge_id, series_alias, key.model_id)] = submission
        self._audit_event(challenge_id, {
            "type": "submission",
            "challenge_id": challenge_id,
            "series_alias": series_alias,
            "model_id": key.model_id,
            "received_at": format_rfc3339(received_at),
            "client_submit_time": (
                format_rfc3339(client_submit_time) if client_submit_time else None
            ),
            "n_values": len(values),
        })
        return Receipt(received_at=received_at, accepted=True)

    # -- audit / scores -------------------------------------------------------------------

    def audit_trail(self, challenge_id: str, operator_token: str) -> list[dict]:
        if operator_token != self.operator_token:
            raise Unauthorized("operator credentials required")
        return list(self._audit.get(challenge_id, ()))

    def reveal(self, challenge_id: str) -> list[tuple[str, SeriesId]]:
        return self.orchestrator.reveal(challenge_id, self.now())

    def scores(self, challenge_id: str) -> dict:
        challenge = self.orchestrator.get(challenge_id)
        series_scores = self.evaluation.series_scores(challenge_id)
        aggregates = self.evaluation.challenge_scores(challenge_id)
        return {
            "challenge_id": challenge_id,
            "stage": challenge.stage,
            "finalized": self.evaluation.is_finalized(challenge_id),
            "series_scores": [
                {
                    "series_alias": challenge.alias_for(s.series),
                    "model_id": s.model_id,
                    "mase": s.mase,
                    "scale": s.scale,
                    "steps_observed": s.steps_observed,
                    "steps_scored": s.steps_scored,
                    "status": s.status,
                }
                for s in series_scores
            ],
            "challenge_scores": [
                {
                    "model_id": cs.model_id,
                    "aggregate_mase": cs.aggregate_mase,
                    "series_count_scored": cs.series_count_scored,
                    "finalized_at": format_rfc3339(cs.finalized_at),
                }
                for _, cs in sorted(aggregates.items())
            ],
        }

    # -- leaderboard ----------------------------------------------------------------------

    def leaderboard(self, window: Window, scope: Scope) -> list[LeaderboardEntry]:
        now = self.now()
        closed = [
            c for c in self.orchestrator.challenges.values()
            if c.closed_at is not None
        ]
        # short-lived cache; new closures invalidate via the count component
        cache_key = (window.days, scope, len(closed))
        cached = self._leaderboard_cache.get(cache_key)
        if cached is not None and timedelta(0) <= now - cached[0] < timedelta(
            seconds=LEADERBOARD_CACHE_TTL_S
        ):
            return cached[1]
        scores_by_challenge = {
            c.spec.challenge_id: self.evaluation.challenge_scores(c.spec.challenge_id)
            for c in closed
        }
        entries = compute_leaderboard(
            models=sorted(self.models.values(), key=lambda m: m.model_id),
            challenges=closed,
            scores_by_challenge=scores_by_challenge,
            scope=scope,
            window=window,
            now=now,
        )
        self._leaderboard_cache[cache_key] = (now, entries)
        return entries
