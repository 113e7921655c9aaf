"""Deterministic end-to-end execution under the stepped virtual clock.

One tick executes ingestion, then orchestration (reveal / partial
evaluation / finalization), then participant agents. All randomness flows
from the scenario seed through named substreams, so two runs of the same
scenario produce byte-identical reports.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional

from .baselines import BaselineAgent
from .clock import VirtualClock
from .config import ScenarioSpec, build_provider
from .errors import ArenaError, AssertionFailed, ScenarioInvalid
from .leaderboard import WINDOW_DAYS, Window
from .service import ArenaService
from .store import Scd2Store
from .timebase import Scope, format_rfc3339


def scenario_secret(seed: int) -> bytes:
    return hashlib.sha256(f"alias-secret:{seed}".encode()).digest()


@dataclass
class _ScriptedRuntime:
    participant: object  # ScriptedParticipant
    model_id: str
    api_key: str
    attempted: set[str] = field(default_factory=set)
    outcomes: list[dict] = field(default_factory=list)


class PlatformRunner:
    """Bundles a service with its agents and drives whole ticks.

    Used both by `run_scenario` and by the virtual-clock serve mode, so the
    simulated and the served code paths stay identical.
    """

    def __init__(
        self,
        scenario: ScenarioSpec,
        operator_token: str = "operator",
        store_log: Optional[str] = None,
        audit_log: Optional[str] = None,
    ):
        self.scenario = scenario
        self.clock = VirtualClock(scenario.start)
        self.store = Scd2Store(clock=self.clock, log_path=store_log)
        self.service = ArenaService(
            clock=self.clock,
            store=self.store,
            providers=[build_provider(p) for p in scenario.providers],
            schedule=scenario.schedule,
            secret=scenario_secret(scenario.seed),
            operator_token=operator_token,
            key_rng=random.Random(f"api-keys:{scenario.seed}"),
            audit_log_path=audit_log,
        )
        self.agents: list[BaselineAgent] = []
        for config in scenario.baselines:
            agent = BaselineAgent(config=config, service=self.service)
            agent.register()
            self.agents.append(agent)
        self.scripted: list[_ScriptedRuntime] = []
        for participant in scenario.scripted:
            card, key = self.service.register_model(
                declared_name_version=participant.name,
                architecture_class="scripted",
                approx_size="n/a",
                external_data_used=False,
                mode="byop",
            )
            self.scripted.append(
                _ScriptedRuntime(participant=participant, model_id=card.model_id, api_key=key.key)
            )
        self.planned = False

    def bootstrap(self) -> None:
        """First ingestion pass (with backfill) and challenge planning."""
        if self.planned:
            return
        now = self.clock.now()
        self.service.scheduler.tick(now)
        self.service.plan(now, now + self.scenario.duration)
        self.planned = True

    def _run_scripted(self, now: datetime) -> None:
        for rt in self.scripted:
            for challenge in self.service.orchestrator.challenges.values():
                cid = challenge.spec.challenge_id
                due = challenge.spec.t_p + rt.participant.offset_from_tp
                if now < due or cid in rt.attempted or challenge.aliases is None:
                    continue
                rt.attempted.add(cid)
                for alias in challenge.aliases:
                    outcome = {"challenge_id": cid, "alias": alias.alias,
                               "at": format_rfc3339(now)}
                    try:
                        receipt = self.service.submit_forecast(
                            api_key=rt.api_key,
                            challenge_id=cid,
                            series_alias=alias.alias,
                            values=[rt.participant.value] * challenge.spec.horizon_h,
                            client_submit_time=now,
                        )
                        outcome["accepted"] = True
                        outcome["received_at"] = format_rfc3339(receipt.received_at)
                    except ArenaError as exc:
                        outcome["accepted"] = False
                        outcome["error"] = type(exc).__name__
                    rt.outcomes.append(outcome)

    def tick(self) -> None:
        now = self.clock.now()
        self.service.tick(now)
        for agent in self.agents:
            agent.tick(now)
        self._run_scripted(now)

    def advance(self, delta: timedelta) -> None:
        """Step the clock to now+delta in whole ticks, executing each one."""
        if not self.planned:
            self.bootstrap()
            self.tick()
        target = self.clock.now() + delta
        while self.clock.now() < target:
            step = min(self.scenario.tick, target - self.clock.now())
            self.clock.advance(step)
            self.tick()

    def all_closed_and_finalized(self) -> bool:
        return all(
            c.stage == "closed" and self.service.evaluation.is_finalized(c.spec.challenge_id)
            for c in self.service.orchestrator.challenges.values()
        )


def run_scenario(scenario: ScenarioSpec, raise_on_failure: bool = False) -> dict:
    """Boot the platform under the virtual clock, drive it to scenario end,
    and evaluate the scenario's named assertions."""
    runner = PlatformRunner(scenario)
    runner.bootstrap()
    runner.tick()

    max_horizon = max(b.bucket.horizon for b in scenario.schedule.buckets)
    max_grace = max(
        b.grace_steps * b.bucket.frequency.step for b in scenario.schedule.buckets
    )
    hard_end = scenario.start + scenario.duration + max_horizon + max_grace + timedelta(days=1)
    while not runner.all_closed_and_finalized():
        if runner.clock.now() >= hard_end:
            break
        runner.clock.advance(scenario.tick)
        runner.tick()

    report = build_report(runner)
    report["assertions"] = evaluate_assertions(scenario, runner, report)
    failed = [a for a in report["assertions"] if not a["passed"]]
    if failed and raise_on_failure:
        first = failed[0]
        raise AssertionFailed(first["name"], first["detail"])
    return report


def build_report(runner: PlatformRunner) -> dict:
    service = runner.service
    now = runner.clock.now()
    challenges = []
    scores = {}
    for cid in sorted(service.orchestrator.challenges):
        challenge = service.orchestrator.challenges[cid]
        challenges.append({
            "challenge_id": cid,
            "bucket": challenge.spec.bucket.slug(),
            "t_p": format_rfc3339(challenge.spec.t_p),
            "stage": challenge.stage,
            "closed_at": format_rfc3339(challenge.closed_at) if challenge.closed_at else None,
            "n_series": len(challenge.aliases or ()),
        })
        scores[cid] = service.scores(cid)
    leaderboards = {}
    for days in WINDOW_DAYS:
        entries = service.leaderboard(Window(days), Scope())
        leaderboards[f"{days}d"] = [
            {
                "model_id": e.model_id,
                "model_name": service.models[e.model_id].declared_name_version,
                "raw_mase": e.raw_mase,
                "adjusted_mase": e.adjusted_mase,
                "participation_rate": e.participation_rate,
                "coverage_count": e.coverage_count,
                "n_available": e.n_available,
            }
            for e in entries
        ]
    return {
        "scenario": runner.scenario.name,
        "seed": runner.scenario.seed,
        "finished_at": format_rfc3339(now),
        "models": [
            {"model_id": m.model_id, "name": m.declared_name_version, "mode": m.mode}
            for m in sorted(service.models.values(), key=lambda m: m.model_id)
        ],
        "challenges": challenges,
        "closed_count": sum(1 for c in challenges if c["stage"] == "closed"),
        "scores": scores,
        "leaderboards": leaderboards,
        "scripted": {
            rt.participant.name: rt.outcomes for rt in runner.scripted
        },
        "pull_counts": dict(sorted(service.scheduler.pull_counts.items())),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


def _model_id_by_name(report: dict, name: str) -> Optional[str]:
    for model in report["models"]:
        if model["name"] == name:
            return model["model_id"]
    return None


def _leaderboard_entry(report: dict, window: str, name: str) -> Optional[dict]:
    model_id = _model_id_by_name(report, name)
    for entry in report["leaderboards"].get(window, ()):
        if entry["model_id"] == model_id:
            return entry
    return None


def evaluate_assertions(scenario: ScenarioSpec, runner: PlatformRunner, report: dict) -> list[dict]:
    results = []
    for spec in scenario.assertions:
        name = spec.get("name", spec.get("check", "unnamed"))
        check = spec.get("check")
        passed, detail = False, ""
        try:
            if check == "closed_count":
                expected = int(spec["equals"])
                actual = report["closed_count"]
                passed = actual == expected
                detail = f"closed {actual}, expected {expected}"
            elif check == "participation_rate":
                entry = _leaderboard_entry(report, spec.get("window", "365d"), spec["model_name"])
                if entry is None:
                    detail = f"model {spec['model_name']} absent from leaderboard"
                else:
                    passed = entry["participation_rate"] == float(spec["equals"])
                    detail = f"rate {entry['participation_rate']}"
            elif check == "raw_mase_below":
                entry = _leaderboard_entry(report, spec.get("window", "365d"), spec["model_name"])
                if entry is None:
                    detail = "model absent"
                else:
                    passed = entry["raw_mase"] < float(spec["below"])
                    detail = f"raw {entry['raw_mase']}"
            elif check == "raw_mase_above":
                entry = _leaderboard_entry(report, spec.get("window", "365d"), spec["model_name"])
                if entry is None:
                    detail = "model absent"
                else:
                    passed = entry["raw_mase"] > float(spec["above"])
                    detail = f"raw {entry['raw_mase']}"
            elif check == "raw_mase_order":
                better = _leaderboard_entry(report, spec.get("window", "365d"), spec["better"])
                worse = _leaderboard_entry(report, spec.get("window", "365d"), spec["worse"])
                if better is None or worse is None:
                    detail = "model absent"
                else:
                    passed = better["raw_mase"] < worse["raw_mase"]
                    detail = f"{better['raw_mase']} vs {worse['raw_mase']}"
            elif check == "scripted_rejected":
                outcomes = report["scripted"].get(spec["participant"], [])
                hits = [
                    o for o in outcomes
                    if not o["accepted"] and o.get("error") == spec.get("error", "DeadlinePassed")
                ]
                expected = int(spec.get("count", 1))
                passed = len(hits) >= expected
                detail = f"{len(hits)} rejected submissions"
            else:
                detail = f"unknown check {check!r}"
        except (KeyError, ValueError, TypeError) as exc:
            raise ScenarioInvalid(f"bad assertion {name}: {exc}") from exc
        results.append({"name": name, "check": check, "passed": passed, "detail": detail})
    return results
