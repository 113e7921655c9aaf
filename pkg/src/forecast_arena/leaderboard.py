"""Rolling, scope-filtered rankings with participation-aware adjustment.

adjusted = raw / participation_rate, participation_rate = participated /
available within the (window, scope) pair. Pure read-side computation over
the challenge and score logs.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from statistics import fmean

from .timebase import Scope

WINDOW_DAYS = (7, 30, 90, 365)


@dataclass(frozen=True)
class Window:
    days: int

    def __post_init__(self):
        if self.days not in WINDOW_DAYS:
            raise ValueError(f"window must be one of {WINDOW_DAYS} days")

    @classmethod
    def parse(cls, text: str) -> "Window":
        if not text.endswith("d"):
            raise ValueError(f"invalid window {text!r}; use e.g. '7d'")
        return cls(int(text[:-1]))

    def contains(self, closed_at: datetime, now: datetime) -> bool:
        return now - timedelta(days=self.days) < closed_at <= now


@dataclass(frozen=True)
class LeaderboardEntry:
    model_id: str
    raw_mase: float
    adjusted_mase: float
    participation_rate: float
    coverage_count: int
    n_available: int


def compute(
    models: list,  # ModelCard
    challenges: list,  # closed Challenge objects
    scores_by_challenge: dict[str, dict[str, object]],  # cid -> model_id -> ChallengeScore
    scope: Scope,
    window: Window,
    now: datetime,
) -> list[LeaderboardEntry]:
    """Rank ascending by adjusted MASE; ties break on higher coverage, then
    lexicographic model id. Models with zero participated challenges are omitted.
    """
    in_window = [
        c for c in challenges
        if c.closed_at is not None
        and window.contains(c.closed_at, now)
        and scope.matches(c.spec.bucket)
    ]
    entries = []
    for model in models:
        # available = challenges the model could have entered
        available = [
            c for c in in_window
            if c.spec.registration_open_at >= model.registered_at
        ]
        participated_scores = [
            scores_by_challenge.get(c.spec.challenge_id, {}).get(model.model_id)
            for c in available
        ]
        participated_scores = [s for s in participated_scores if s is not None]
        if not participated_scores:
            continue
        raw = fmean(s.aggregate_mase for s in participated_scores)
        rate = len(participated_scores) / len(available)
        entries.append(
            LeaderboardEntry(
                model_id=model.model_id,
                raw_mase=raw,
                adjusted_mase=raw / rate,
                participation_rate=rate,
                coverage_count=len(participated_scores),
                n_available=len(available),
            )
        )
    entries.sort(key=lambda e: (e.adjusted_mase, -e.coverage_count, e.model_id))
    return entries
