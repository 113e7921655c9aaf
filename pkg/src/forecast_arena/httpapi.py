"""HTTP+JSON surface, versioned under /v1.

Thin adapters over ArenaService; every handler authenticates, delegates,
and serializes. When the service runs under a virtual clock (hermetic
serve mode), operator-only /v1/admin endpoints drive time forward.
"""

from __future__ import annotations

from datetime import datetime
from typing import Optional

from fastapi import FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import errors
from .leaderboard import Window
from .service import ArenaService, ContextPayload
from .timebase import Frequency, Scope, format_rfc3339, parse_duration, parse_rfc3339

ERROR_STATUS = {
    errors.MissingDisclosure: 400,
    errors.WrongLength: 400,
    errors.NonFiniteValue: 400,
    errors.ScenarioInvalid: 400,
    errors.InvalidApiKey: 401,
    errors.Unauthorized: 403,
    errors.StillInRegistration: 403,
    errors.UnknownChallenge: 404,
    errors.UnknownAlias: 404,
    errors.UnknownModel: 404,
    errors.UnknownSeries: 404,
    errors.NotInRegistration: 409,
    errors.DeadlinePassed: 409,
    errors.RateLimited: 429,
}


class RegisterModelBody(BaseModel):
    declared_name_version: str = ""
    architecture_class: str = ""
    approx_size: str = ""
    external_data_used: Optional[bool] = None
    mode: str = "byop"


class ForecastBody(BaseModel):
    alias: str
    model_id: str
    values: list[float]
    client_submit_time: Optional[str] = None
    external_data_used: bool = False


class AdvanceBody(BaseModel):
    duration: str


def _scope(domain: Optional[str], frequency: Optional[str], horizon: Optional[str]) -> Scope:
    return Scope(
        domain=domain or None,
        frequency=Frequency.parse(frequency) if frequency else None,
        horizon=parse_duration(horizon) if horizon else None,
    )


def _ts(value: Optional[datetime]) -> Optional[str]:
    return format_rfc3339(value) if value else None


def _summary_json(summary: dict) -> dict:
    out = {k: v for k, v in summary.items() if k != "bucket_key"}
    for key in ("t_p", "announce_at", "registration_open_at"):
        out[key] = _ts(out[key])
    return out


def _context_json(payload: ContextPayload) -> dict:
    return {
        "challenge_id": payload.challenge_id,
        "series_alias": payload.series_alias,
        "frequency": payload.frequency,
        "t_p": format_rfc3339(payload.t_p),
        "served_at": format_rfc3339(payload.served_at),
        "horizon_h": payload.horizon_h,
        "points": [
            {"event_time": format_rfc3339(ts), "value": value}
            for ts, value in payload.points
        ],
    }


def create_app(service: ArenaService, runner=None) -> FastAPI:
    """`runner` is a PlatformRunner when serving under a virtual clock;
    it enables the /v1/admin time-control endpoints for hermetic testing."""
    app = FastAPI(title="forecast-arena", version="1")

    @app.exception_handler(errors.ArenaError)
    async def arena_error_handler(_req: Request, exc: errors.ArenaError):
        status = ERROR_STATUS.get(type(exc), 500)
        body = {"error": type(exc).__name__, "detail": str(exc)}
        headers = {}
        if isinstance(exc, errors.RateLimited):
            headers["Retry-After"] = f"{exc.retry_after_seconds:.0f}"
        return JSONResponse(status_code=status, content=body, headers=headers)

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "now": format_rfc3339(service.now())}

    @app.post("/v1/models")
    def register_model(body: RegisterModelBody):
        card, key = service.register_model(
            declared_name_version=body.declared_name_version,
            architecture_class=body.architecture_class,
            approx_size=body.approx_size,
            external_data_used=body.external_data_used,
            mode=body.mode,
        )
        return {"model_id": card.model_id, "api_key": key.key}

    @app.get("/v1/models")
    def list_models():
        return {
            "models": [
                {
                    "model_id": m.model_id,
                    "declared_name_version": m.declared_name_version,
                    "architecture_class": m.architecture_class,
                    "approx_size": m.approx_size,
                    "mode": m.mode,
                    "registered_at": format_rfc3339(m.registered_at),
                }
                for m in sorted(service.models.values(), key=lambda m: m.model_id)
            ]
        }

    @app.get("/v1/models/{model_id}")
    def model_detail(model_id: str):
        m = service.get_model(model_id)
        return {
            "model_id": m.model_id,
            "declared_name_version": m.declared_name_version,
            "architecture_class": m.architecture_class,
            "approx_size": m.approx_size,
            "mode": m.mode,
            "registered_at": format_rfc3339(m.registered_at),
        }

    @app.get("/v1/challenges")
    def list_challenges(
        state: Optional[str] = None,
        domain: Optional[str] = None,
        frequency: Optional[str] = None,
        horizon: Optional[str] = None,
    ):
        scope = _scope(domain, frequency, horizon)
        return {
            "challenges": [
                _summary_json(s) for s in service.list_challenges(state=state, scope=scope)
            ]
        }

    @app.get("/v1/challenges/{challenge_id}")
    def challenge_detail(challenge_id: str):
        return _summary_json(service.challenge_detail(challenge_id))

    @app.get("/v1/challenges/{challenge_id}/context/{alias}")
    def get_context(
        challenge_id: str,
        alias: str,
        x_api_key: str = Header(default=""),
    ):
        payload = service.get_context(x_api_key, challenge_id, alias)
        return _context_json(payload)

    @app.post("/v1/challenges/{challenge_id}/forecasts")
    def submit_forecast(
        challenge_id: str,
        body: ForecastBody,
        x_api_key: str = Header(default=""),
    ):
        key = service.api_keys.get(x_api_key)
        if key is not None and body.model_id and key.model_id != body.model_id:
            raise errors.Unauthorized("api key does not own this model_id")
        receipt = service.submit_forecast(
            api_key=x_api_key,
            challenge_id=challenge_id,
            series_alias=body.alias,
            values=body.values,
            client_submit_time=(
                parse_rfc3339(body.client_submit_time) if body.client_submit_time else None
            ),
            external_data_used=body.external_data_used,
        )
        return {"received_at": format_rfc3339(receipt.received_at), "accepted": receipt.accepted}

    @app.get("/v1/challenges/{challenge_id}/scores")
    def challenge_scores(challenge_id: str):
        return service.scores(challenge_id)

    @app.get("/v1/leaderboard")
    def leaderboard(
        window: str = Query(default="7d"),
        domain: Optional[str] = None,
        frequency: Optional[str] = None,
        horizon: Optional[str] = None,
    ):
        entries = service.leaderboard(Window.parse(window), _scope(domain, frequency, horizon))
        return {
            "window": window,
            "entries": [
                {
                    "model_id": e.model_id,
                    "raw_mase": e.raw_mase,
                    "adjusted_mase": e.adjusted_mase,
                    "participation_rate": e.participation_rate,
                    "coverage_count": e.coverage_count,
                    "n_available": e.n_available,
                }
                for e in entries
            ],
        }

    @app.get("/v1/audit/{challenge_id}")
    def audit(challenge_id: str, x_operator_token: str = Header(default="")):
        return {"events": service.audit_trail(challenge_id, x_operator_token)}

    if runner is not None:

        @app.post("/v1/admin/advance")
        def advance(body: AdvanceBody, x_operator_token: str = Header(default="")):
            if x_operator_token != service.operator_token:
                raise errors.Unauthorized("operator credentials required")
            runner.advance(parse_duration(body.duration))
            return {"now": format_rfc3339(service.now())}

    return app
