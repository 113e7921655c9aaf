"""Challenge planning, bucketed random sampling with pseudonymization, and
the four-stage lifecycle (announced -> registration -> active -> closed).

The stage of a challenge is a pure function of (spec, store contents, now);
the orchestrator tick only materializes idempotent side effects (sampling,
alias reveal, scale snapshots, finalization).
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import logging
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Optional

from .errors import (
    InsufficientEligible,
    NoEligibleSeries,
    StillInRegistration,
    UnknownChallenge,
)
from .timebase import BucketKey, SeriesId, format_rfc3339, horizon_grid, horizon_steps

logger = logging.getLogger(__name__)

STAGES = ("announced", "registration", "active", "closed")


@dataclass(frozen=True)
class Selection:
    mode: str  # "fixed" | "random"
    series: tuple[SeriesId, ...] = ()
    k: int = 0
    seed: int = 0


@dataclass(frozen=True)
class ChallengeSpec:
    challenge_id: str
    bucket: BucketKey
    t_p: datetime
    context_length: int
    horizon_h: int
    selection: Selection
    announce_at: datetime
    registration_open_at: datetime
    grace: timedelta

    def __post_init__(self):
        if not (self.announce_at <= self.registration_open_at < self.t_p):
            raise ValueError("require announce_at <= registration_open_at < t_p")
        if self.horizon_h != horizon_steps(self.bucket.horizon, self.bucket.frequency):
            raise ValueError("horizon_h inconsistent with bucket horizon/frequency")


@dataclass
class SeriesAlias:
    challenge_id: str
    alias: str
    true_series: SeriesId
    revealed: bool = False


@dataclass
class Challenge:
    """Spec plus mutable lifecycle state."""

    spec: ChallengeSpec
    stage: str = "announced"
    aliases: Optional[list[SeriesAlias]] = None
    reveal_done: bool = False
    closed_at: Optional[datetime] = None
    sampling_failed: Optional[str] = None

    def horizon_grid(self) -> list[datetime]:
        return horizon_grid(self.spec.t_p, self.spec.bucket.frequency, self.spec.horizon_h)

    def alias_for(self, series: SeriesId) -> Optional[str]:
        for a in self.aliases or ():
            if a.true_series.key == series.key:
                return a.alias
        return None

    def lookup_alias(self, alias: str) -> Optional[SeriesAlias]:
        for a in self.aliases or ():
            if a.alias == alias:
                return a
        return None


def make_alias(secret: bytes, challenge_id: str, series: SeriesId) -> str:
    """Deterministic opaque token: keyed hash of (challenge, series), so a
    series is unlinkable across challenges without the server secret."""
    digest = hmac.new(
        secret,
        f"{challenge_id}|{series.provider}|{series.external_id}".encode(),
        hashlib.sha256,
    ).digest()
    return base64.b32encode(digest[:10]).decode().lower()


def sample_random(
    bucket: BucketKey,
    k: int,
    seed: int,
    eligible: list[SeriesId],
    secret: bytes,
    challenge_id: str,
) -> list[SeriesAlias]:
    """Draw k distinct series uniformly without replacement, deterministically
    in (seed, eligible), and pseudonymize them."""
    if len(eligible) < k:
        raise InsufficientEligible(
            f"bucket {bucket.slug()} has {len(eligible)} eligible series, need {k}"
        )
    ordered = sorted(eligible, key=lambda s: s.key)
    drawn = random.Random(seed).sample(ordered, k)
    return [
        SeriesAlias(challenge_id=challenge_id, alias=make_alias(secret, challenge_id, s),
                    true_series=s)
        for s in drawn
    ]


@dataclass(frozen=True)
class BucketSchedule:
    bucket: BucketKey
    cadence_per_day: int
    selection_mode: str = "random"
    k: int = 10
    fixed_series: tuple[SeriesId, ...] = ()
    context_length: int = 720
    registration_window: timedelta = timedelta(hours=1)
    announce_lead: timedelta = timedelta(hours=1)  # before registration opens
    phase: timedelta = timedelta(hours=3)  # offset of the first t_p each day
    grace_steps: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.cadence_per_day < 1:
            raise ValueError("cadence_per_day must be >= 1")


@dataclass(frozen=True)
class ScheduleConfig:
    buckets: tuple[BucketSchedule, ...]


def _challenge_id(bucket: BucketKey, t_p: datetime) -> str:
    return f"ch-{bucket.slug()}-{t_p.strftime('%Y%m%dT%H%M%SZ')}"


def _challenge_seed(base_seed: int, challenge_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{challenge_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def plan_challenges(
    config: ScheduleConfig,
    window_start: datetime,
    window_end: datetime,
    eligible_count: Optional[Callable[[BucketKey], int]] = None,
) -> list[ChallengeSpec]:
    """Emit every spec whose t_p falls in [window_start, window_end).

    t_p cut points are spread across each day at day/cadence spacing from
    the bucket's phase offset. Raises NoEligibleSeries when a random bucket
    cannot currently field k fresh series.
    """
    specs = []
    for sched in config.buckets:
        if (
            sched.selection_mode == "random"
            and eligible_count is not None
            and eligible_count(sched.bucket) < sched.k
        ):
            raise NoEligibleSeries(
                f"bucket {sched.bucket.slug()} has fewer than {sched.k} fresh series"
            )
        spacing = timedelta(days=1) / sched.cadence_per_day
        day = datetime(
            window_start.year, window_start.month, window_start.day,
            tzinfo=window_start.tzinfo,
        )
        t_p = day + sched.phase
        while t_p < window_start:
            t_p += spacing
        while t_p < window_end:
            cid = _challenge_id(sched.bucket, t_p)
            if sched.selection_mode == "fixed":
                selection = Selection(mode="fixed", series=sched.fixed_series)
            else:
                selection = Selection(
                    mode="random", k=sched.k, seed=_challenge_seed(sched.seed, cid)
                )
            reg_open = t_p - sched.registration_window
            specs.append(
                ChallengeSpec(
                    challenge_id=cid,
                    bucket=sched.bucket,
                    t_p=t_p,
                    context_length=sched.context_length,
                    horizon_h=horizon_steps(sched.bucket.horizon, sched.bucket.frequency),
                    selection=selection,
                    announce_at=reg_open - sched.announce_lead,
                    registration_open_at=reg_open,
                    grace=sched.grace_steps * sched.bucket.frequency.step,
                )
            )
            t_p += spacing
    specs.sort(key=lambda s: (s.t_p, s.challenge_id))
    return specs


class Orchestrator:
    """Owns challenge state and drives lifecycle transitions on each tick."""

    def __init__(
        self,
        store,
        evaluation,
        secret: bytes,
        eligible_series: Callable[[BucketKey, datetime], list[SeriesId]],
        submissions_for: Callable[[str], list],
    ):
        self.store = store
        self.evaluation = evaluation
        self.secret = secret
        self.eligible_series = eligible_series
        self.submissions_for = submissions_for
        self.challenges: dict[str, Challenge] = {}

    # -- registration of planned specs ---------------------------------------

    def add_specs(self, specs: list[ChallengeSpec]) -> None:
        for spec in specs:
            if spec.challenge_id not in self.challenges:
                self.challenges[spec.challenge_id] = Challenge(spec=spec)

    def get(self, challenge_id: str) -> Challenge:
        try:
            return self.challenges[challenge_id]
        except KeyError:
            raise UnknownChallenge(challenge_id) from None

    # -- pure stage computation ------------------------------------------------

    def stage_for(self, challenge: Challenge, now: datetime) -> str:
        spec = challenge.spec
        if now < spec.registration_open_at:
            return "announced"
        if now <= spec.t_p:
            return "registration"
        grid = challenge.horizon_grid()
        if now > grid[-1] + spec.grace:
            return "closed"
        if challenge.aliases:
            observed = 0
            for alias in challenge.aliases:
                view = self.store.as_of(alias.true_series, grid[0], grid[-1], now)
                observed += len(view.points)
            if observed == spec.horizon_h * len(challenge.aliases):
                return "closed"
        return "active"

    # -- side-effecting transitions ---------------------------------------------

    def _ensure_sampled(self, challenge: Challenge, now: datetime) -> None:
        if challenge.aliases is not None or challenge.sampling_failed:
            return
        spec = challenge.spec
        if spec.selection.mode == "fixed":
            challenge.aliases = [
                SeriesAlias(
                    challenge_id=spec.challenge_id,
                    alias=make_alias(self.secret, spec.challenge_id, s),
                    true_series=s,
                )
                for s in spec.selection.series
            ]
            return
        eligible = self.eligible_series(spec.bucket, now)
        try:
            challenge.aliases = sample_random(
                spec.bucket, spec.selection.k, spec.selection.seed,
                eligible, self.secret, spec.challenge_id,
            )
        except InsufficientEligible as exc:
            challenge.sampling_failed = str(exc)
            logger.warning("sampling failed for %s: %s", spec.challenge_id, exc)

    def _do_reveal(self, challenge: Challenge, reveal_time: datetime) -> None:
        if challenge.reveal_done:
            return
        spec = challenge.spec
        step = spec.bucket.frequency.step
        for alias in challenge.aliases or ():
            alias.revealed = True
            # Pin the MASE scale to the context as known at t_p: deterministic
            # and reproducible from the audit trail regardless of later edits.
            view = self.store.as_of(
                alias.true_series,
                spec.t_p - spec.context_length * step,
                spec.t_p,
                tx_time=spec.t_p,
            )
            points = list(view.points)[-spec.context_length:]
            self.evaluation.register_scale_context(
                spec.challenge_id, alias.true_series, points, spec.bucket.frequency
            )
        challenge.reveal_done = True

    def advance(self, challenge: Challenge, now: datetime) -> str:
        """Move the challenge to the stage implied by now, with idempotent
        side effects; stages never move backwards."""
        target = self.stage_for(challenge, now)
        if STAGES.index(target) < STAGES.index(challenge.stage):
            return challenge.stage  # monotone; a later tick never regresses
        if target in ("announced", "registration") and now >= challenge.spec.announce_at:
            self._ensure_sampled(challenge, now)
        if target in ("active", "closed"):
            if challenge.aliases is None:
                self._ensure_sampled(challenge, now)
            self._do_reveal(challenge, now)
            # early closure (all actuals visible) is only decidable once the
            # sampled series are known, so re-derive the stage after sampling
            target = self.stage_for(challenge, now)
        challenge.stage = target
        if target == "active":
            self.evaluation.update_partial(
                challenge, self.submissions_for(challenge.spec.challenge_id), now
            )
        if target == "closed":
            if challenge.closed_at is None:
                challenge.closed_at = now
            self.evaluation.finalize(
                challenge, self.submissions_for(challenge.spec.challenge_id), now
            )
        return target

    def tick(self, now: datetime) -> None:
        for cid in sorted(self.challenges):
            challenge = self.challenges[cid]
            if challenge.stage == "closed" and self.evaluation.is_finalized(cid):
                continue
            if now < challenge.spec.announce_at:
                continue
            self.advance(challenge, now)

    def reveal(self, challenge_id: str, now: datetime) -> list[tuple[str, SeriesId]]:
        challenge = self.get(challenge_id)
        stage = self.stage_for(challenge, now)
        if stage in ("announced", "registration"):
            raise StillInRegistration(challenge_id)
        self._ensure_sampled(challenge, now)
        self._do_reveal(challenge, now)
        return [(a.alias, a.true_series) for a in challenge.aliases or ()]

    def open_for(self, now: datetime) -> list[Challenge]:
        return [
            c for c in self.challenges.values()
            if now >= c.spec.announce_at
        ]
