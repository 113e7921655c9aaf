import json
import math
from datetime import timedelta

import pytest
from fastapi.testclient import TestClient

from forecast_arena.errors import (
    DeadlinePassed,
    InvalidApiKey,
    MissingDisclosure,
    NonFiniteValue,
    NotInRegistration,
    RateLimited,
    Unauthorized,
    UnknownAlias,
    WrongLength,
)
from forecast_arena.httpapi import create_app
from forecast_arena.leaderboard import Window
from forecast_arena.timebase import Scope

from conftest import advance_to, first_challenge, make_runner

HOUR = timedelta(hours=1)

CARD = dict(
    declared_name_version="model-x v1",
    architecture_class="transformer",
    approx_size="10M",
    external_data_used=False,
    mode="byop",
)


@pytest.fixture
def runner():
    return make_runner()


def register(runner, **overrides):
    return runner.service.register_model(**{**CARD, **overrides})


def in_registration(runner):
    """Advance to the first challenge's registration window; return (challenge, key)."""
    challenge = first_challenge(runner)
    advance_to(runner, challenge.spec.registration_open_at)
    _card, key = register(runner)
    return challenge, key


class TestRegistry:
    @pytest.mark.parametrize(
        "field", ["declared_name_version", "architecture_class", "approx_size"]
    )
    def test_blank_disclosure_rejected(self, runner, field):
        with pytest.raises(MissingDisclosure, match=field):
            register(runner, **{field: "  "})

    def test_external_data_disclosure_required(self, runner):
        with pytest.raises(MissingDisclosure, match="external_data_used"):
            register(runner, external_data_used=None)

    def test_ids_sequential_and_keys_deterministic_per_seed(self):
        keys = []
        for _ in range(2):
            r = make_runner()
            card1, key1 = register(r)
            card2, key2 = register(r)
            assert (card1.model_id, card2.model_id) == ("m0001", "m0002")
            assert key1.key != key2.key
            keys.append((key1.key, key2.key))
        assert keys[0] == keys[1]

    def test_invalid_api_key(self, runner):
        challenge = first_challenge(runner)
        with pytest.raises(InvalidApiKey):
            runner.service.get_context("bogus", challenge.spec.challenge_id, "x")


class TestContext:
    def test_only_in_registration_stage(self, runner):
        challenge, key = in_registration(runner)
        cid = challenge.spec.challenge_id
        alias = challenge.aliases[0].alias
        assert runner.service.get_context(key.key, cid, alias).points
        advance_to(runner, challenge.spec.t_p + HOUR)
        with pytest.raises(NotInRegistration):
            runner.service.get_context(key.key, cid, alias)

    def test_unknown_alias(self, runner):
        challenge, key = in_registration(runner)
        with pytest.raises(UnknownAlias):
            runner.service.get_context(key.key, challenge.spec.challenge_id, "nope")

    def test_no_future_or_unborn_points(self, runner):
        challenge, key = in_registration(runner)
        spec = challenge.spec
        for alias in challenge.aliases:
            payload = runner.service.get_context(key.key, spec.challenge_id, alias.alias)
            assert payload.served_at == runner.clock.now()
            assert len(payload.points) <= spec.context_length
            for ts, _value in payload.points:
                assert ts <= spec.t_p
                created = runner.service.store.versions_of(alias.true_series, ts)[-1].created_at
                assert created <= payload.served_at

    def test_identical_for_every_participant(self, runner):
        challenge, key_a = in_registration(runner)
        _card, key_b = register(runner)
        cid = challenge.spec.challenge_id
        alias = challenge.aliases[0].alias
        a = runner.service.get_context(key_a.key, cid, alias)
        b = runner.service.get_context(key_b.key, cid, alias)
        assert a.points == b.points and a.t_p == b.t_p

    def test_rate_limit_sliding_window(self):
        runner = make_runner()
        runner.service.key_rate_limit = 5
        challenge, key = in_registration(runner)
        cid = challenge.spec.challenge_id
        alias = challenge.aliases[0].alias
        for _ in range(5):
            runner.service.get_context(key.key, cid, alias)
        with pytest.raises(RateLimited) as exc:
            runner.service.get_context(key.key, cid, alias)
        assert exc.value.retry_after_seconds > 0
        runner.clock.advance(timedelta(seconds=61))
        assert runner.service.get_context(key.key, cid, alias).points


class TestSubmission:
    def submit(self, runner, challenge, key, values=None, **kw):
        return runner.service.submit_forecast(
            api_key=key.key,
            challenge_id=challenge.spec.challenge_id,
            series_alias=challenge.aliases[0].alias,
            values=values if values is not None else [1.0] * challenge.spec.horizon_h,
            **kw,
        )

    def test_accepted_inside_window(self, runner):
        challenge, key = in_registration(runner)
        receipt = self.submit(runner, challenge, key)
        assert receipt.accepted and receipt.received_at == runner.clock.now()

    def test_accepted_exactly_at_cutoff(self, runner):
        challenge, key = in_registration(runner)
        advance_to(runner, challenge.spec.t_p)
        assert self.submit(runner, challenge, key).accepted

    def test_rejected_after_cutoff_by_server_clock(self, runner):
        challenge, key = in_registration(runner)
        advance_to(runner, challenge.spec.t_p + timedelta(minutes=15))
        with pytest.raises(DeadlinePassed):
            # a spoofed early client timestamp must not help
            self.submit(runner, challenge, key,
                        client_submit_time=challenge.spec.t_p - HOUR)

    def test_rejected_before_registration_opens(self, runner):
        challenge = first_challenge(runner)
        advance_to(runner, challenge.spec.announce_at)
        _card, key = register(runner)
        # aliases are sampled at announce but submission must wait for the window
        runner.service.tick(runner.clock.now())
        with pytest.raises(NotInRegistration):
            self.submit(runner, challenge, key)

    def test_wrong_length_and_nonfinite(self, runner):
        challenge, key = in_registration(runner)
        with pytest.raises(WrongLength):
            self.submit(runner, challenge, key, values=[1.0] * 3)
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(NonFiniteValue):
                self.submit(runner, challenge, key,
                            values=[1.0] * (challenge.spec.horizon_h - 1) + [bad])

    def test_resubmission_replaces_atomically(self, runner):
        challenge, key = in_registration(runner)
        h = challenge.spec.horizon_h
        self.submit(runner, challenge, key, values=[1.0] * h)
        self.submit(runner, challenge, key, values=[2.0] * h)
        subs = runner.service.submissions_for(challenge.spec.challenge_id)
        assert len(subs) == 1
        assert subs[0].values == [2.0] * h

    def test_submissions_isolated_per_model(self, runner):
        challenge, key_a = in_registration(runner)
        _card, key_b = register(runner)
        h = challenge.spec.horizon_h
        self.submit(runner, challenge, key_a, values=[1.0] * h)
        self.submit(runner, challenge, key_b, values=[2.0] * h)
        subs = runner.service.submissions_for(challenge.spec.challenge_id)
        assert sorted(s.values[0] for s in subs) == [1.0, 2.0]


class TestPseudonymization:
    def test_no_identity_leak_before_reveal(self, runner):
        challenge, key = in_registration(runner)
        listing = runner.service.list_challenges()
        text = json.dumps(listing, default=str)
        for alias in challenge.aliases:
            assert alias.true_series.external_id not in text.replace("synth", "")
            assert alias.true_series.display_name not in text
        assert "Series s" not in text

    def test_reveal_after_cutoff(self, runner):
        challenge, _key = in_registration(runner)
        advance_to(runner, challenge.spec.t_p + timedelta(minutes=15))
        detail = runner.service.challenge_detail(challenge.spec.challenge_id)
        assert {s["alias"] for s in detail["series"]} == {
            a.alias for a in challenge.aliases
        }
        assert all(s["external_id"].startswith("s") for s in detail["series"])


class TestAudit:
    def test_trail_records_serving_and_rejections(self, runner):
        challenge, key = in_registration(runner)
        cid = challenge.spec.challenge_id
        alias = challenge.aliases[0].alias
        runner.service.get_context(key.key, cid, alias)
        runner.service.submit_forecast(
            api_key=key.key, challenge_id=cid, series_alias=alias,
            values=[1.0] * challenge.spec.horizon_h,
        )
        with pytest.raises(WrongLength):
            runner.service.submit_forecast(
                api_key=key.key, challenge_id=cid, series_alias=alias, values=[1.0],
            )
        events = runner.service.audit_trail(cid, runner.service.operator_token)
        kinds = [e["type"] for e in events]
        assert kinds == ["context_served", "submission", "submission_rejected"]
        assert events[2]["error"] == "WrongLength"

    def test_operator_token_required(self, runner):
        challenge, _key = in_registration(runner)
        with pytest.raises(Unauthorized):
            runner.service.audit_trail(challenge.spec.challenge_id, "wrong")


class TestHttpApi:
    @pytest.fixture
    def client(self, runner):
        return runner, TestClient(create_app(runner.service, runner=runner))

    def test_health(self, client):
        runner, http = client
        body = http.get("/v1/health").json()
        assert body["status"] == "ok" and body["now"].endswith("Z")

    def test_register_and_model_listing(self, client):
        _runner, http = client
        created = http.post("/v1/models", json=CARD).json()
        assert created["model_id"] == "m0001" and created["api_key"]
        assert http.post("/v1/models", json={**CARD, "approx_size": ""}).status_code == 400
        models = http.get("/v1/models").json()["models"]
        assert [m["model_id"] for m in models] == ["m0001"]
        assert http.get("/v1/models/m0001").status_code == 200
        assert http.get("/v1/models/m9999").status_code == 404

    def test_full_round_trip(self, client):
        runner, http = client
        challenge = first_challenge(runner)
        advance_to(runner, challenge.spec.registration_open_at)
        key = http.post("/v1/models", json=CARD).json()["api_key"]
        cid = challenge.spec.challenge_id

        listing = http.get("/v1/challenges", params={"state": "registration"}).json()
        summary = listing["challenges"][0]
        assert summary["challenge_id"] == cid and "series" not in summary

        ctx = http.get(
            f"/v1/challenges/{cid}/context/{summary['aliases'][0]}",
            headers={"X-Api-Key": key},
        ).json()
        assert ctx["horizon_h"] == 24 and len(ctx["points"]) > 0

        last = ctx["points"][-1]["value"]
        resp = http.post(
            f"/v1/challenges/{cid}/forecasts",
            headers={"X-Api-Key": key},
            json={"alias": ctx["series_alias"], "model_id": "m0001", "values": [last] * 24},
        )
        assert resp.status_code == 200 and resp.json()["accepted"] is True

    def test_error_status_mapping(self, client):
        runner, http = client
        challenge = first_challenge(runner)
        advance_to(runner, challenge.spec.registration_open_at)
        key = http.post("/v1/models", json=CARD).json()["api_key"]
        cid = challenge.spec.challenge_id
        alias = challenge.aliases[0].alias
        url = f"/v1/challenges/{cid}/forecasts"

        assert http.get(f"/v1/challenges/{cid}/context/{alias}").status_code == 401
        assert http.get(f"/v1/challenges/{cid}/context/nope",
                        headers={"X-Api-Key": key}).status_code == 404
        assert http.get("/v1/challenges/nope").status_code == 404
        assert http.post(url, headers={"X-Api-Key": key},
                         json={"alias": alias, "model_id": "m0001",
                               "values": [1.0] * 5}).status_code == 400
        assert http.post(url, headers={"X-Api-Key": key},
                         json={"alias": alias, "model_id": "m0002",
                               "values": [1.0] * 24}).status_code == 403
        assert http.get(f"/v1/audit/{cid}").status_code == 403
        advance_to(runner, challenge.spec.t_p + timedelta(minutes=15))
        resp = http.post(url, headers={"X-Api-Key": key},
                         json={"alias": alias, "model_id": "m0001", "values": [1.0] * 24})
        assert resp.status_code == 409 and resp.json()["error"] == "DeadlinePassed"

    def test_rate_limit_has_retry_after(self, client):
        runner, http = client
        runner.service.key_rate_limit = 3
        challenge = first_challenge(runner)
        advance_to(runner, challenge.spec.registration_open_at)
        key = http.post("/v1/models", json=CARD).json()["api_key"]
        cid = challenge.spec.challenge_id
        alias = challenge.aliases[0].alias
        for _ in range(3):
            assert http.get(f"/v1/challenges/{cid}/context/{alias}",
                            headers={"X-Api-Key": key}).status_code == 200
        resp = http.get(f"/v1/challenges/{cid}/context/{alias}",
                        headers={"X-Api-Key": key})
        assert resp.status_code == 429
        assert float(resp.headers["Retry-After"]) > 0

    def test_admin_advance_guarded(self, client):
        runner, http = client
        before = runner.clock.now()
        assert http.post("/v1/admin/advance", json={"duration": "PT1H"}).status_code == 403
        resp = http.post(
            "/v1/admin/advance",
            headers={"X-Operator-Token": runner.service.operator_token},
            json={"duration": "PT1H"},
        )
        assert resp.status_code == 200
        assert runner.clock.now() == before + HOUR

    def test_scores_and_leaderboard_endpoints(self, client):
        runner, http = client
        challenge = first_challenge(runner)
        advance_to(runner, challenge.spec.registration_open_at)
        key = http.post("/v1/models", json=CARD).json()["api_key"]
        cid = challenge.spec.challenge_id
        ctx = http.get(f"/v1/challenges/{cid}/context/{challenge.aliases[0].alias}",
                       headers={"X-Api-Key": key}).json()
        http.post(f"/v1/challenges/{cid}/forecasts", headers={"X-Api-Key": key},
                  json={"alias": ctx["series_alias"], "model_id": "m0001",
                        "values": [ctx["points"][-1]["value"]] * 24})
        advance_to(runner, challenge.spec.t_p + timedelta(hours=26))
        scores = http.get(f"/v1/challenges/{cid}/scores").json()
        assert scores["finalized"] is True
        assert scores["challenge_scores"][0]["model_id"] == "m0001"
        board = http.get("/v1/leaderboard", params={"window": "7d"}).json()
        entry = board["entries"][0]
        assert entry["model_id"] == "m0001"
        # only one challenge has closed, so availability and coverage are both 1
        assert entry["coverage_count"] == 1 and entry["participation_rate"] == 1.0


class TestLeaderboardCache:
    def test_cache_invalidated_by_new_closure(self, runner):
        challenge, key = in_registration(runner)
        h = challenge.spec.horizon_h
        runner.service.submit_forecast(
            api_key=key.key, challenge_id=challenge.spec.challenge_id,
            series_alias=challenge.aliases[0].alias, values=[100.0] * h,
        )
        before = runner.service.leaderboard(Window(7), Scope())
        assert before == runner.service.leaderboard(Window(7), Scope())  # cached
        advance_to(runner, challenge.spec.t_p + timedelta(hours=26))
        after = runner.service.leaderboard(Window(7), Scope())
        assert [e.model_id for e in after] == ["m0001"]
