"""Operator CLI: `arena serve`, `arena sim run`, plus read-side commands
that query a running instance over HTTP."""

from __future__ import annotations

import json
import os
import sys

import click
import httpx

from .config import load_scenario, load_server_config
from .simulation import PlatformRunner, report_json, run_scenario

DEFAULT_BASE_URL = "http://127.0.0.1:8000"


def _base_url(value: str | None) -> str:
    return value or os.environ.get("ARENA_URL", DEFAULT_BASE_URL)


@click.group()
def main():
    """Leakage-resistant live forecasting benchmark."""


@main.command()
@click.option("--config", "config_path", envvar="ARENA_CONFIG", required=True,
              type=click.Path(exists=True))
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
def serve(config_path, host, port):
    """Start the live service (realtime or virtual clock per config)."""
    import threading

    import uvicorn

    from .httpapi import create_app

    cfg = load_server_config(config_path)
    scenario = cfg.scenario

    if cfg.clock_mode == "virtual":
        runner = PlatformRunner(
            scenario,
            operator_token=cfg.operator_token,
            store_log=cfg.store_log,
            audit_log=cfg.audit_log,
        )
        runner.bootstrap()
        runner.tick()
        app = create_app(runner.service, runner=runner)
    else:
        from .clock import RealClock
        from .config import build_provider
        from .service import ArenaService
        from .store import Scd2Store

        clock = RealClock()
        store = Scd2Store(clock=clock, log_path=cfg.store_log)
        from .simulation import scenario_secret

        service = ArenaService(
            clock=clock,
            store=store,
            providers=[build_provider(p) for p in scenario.providers],
            schedule=scenario.schedule,
            secret=scenario_secret(scenario.seed),
            operator_token=cfg.operator_token,
            audit_log_path=cfg.audit_log,
        )
        now = clock.now()
        service.tick(now)
        service.plan(now, now + scenario.duration)

        stop = threading.Event()

        def ticker():
            while not stop.wait(1.0):
                service.tick()

        threading.Thread(target=ticker, daemon=True).start()
        app = create_app(service)

    uvicorn.run(app, host=host or cfg.host, port=port or cfg.port, log_level="warning")


@main.group()
def sim():
    """Deterministic simulation harness."""


@sim.command("run")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--report", "report_path", default=None, type=click.Path())
def sim_run(scenario_path, report_path):
    """Run a scenario file end to end and write its report."""
    scenario = load_scenario(scenario_path)
    report = run_scenario(scenario)
    rendered = report_json(report)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(rendered + "\n")
    else:
        click.echo(rendered)
    failed = [a for a in report["assertions"] if not a["passed"]]
    for result in report["assertions"]:
        marker = "PASS" if result["passed"] else "FAIL"
        click.echo(f"[{marker}] {result['name']}: {result['detail']}", err=True)
    sys.exit(1 if failed else 0)


@main.command()
@click.option("--window", default="7d", show_default=True)
@click.option("--domain", default=None)
@click.option("--frequency", default=None)
@click.option("--horizon", default=None)
@click.option("--base-url", default=None)
def leaderboard(window, domain, frequency, horizon, base_url):
    """Render the leaderboard of a running instance."""
    params = {"window": window}
    for name, value in (("domain", domain), ("frequency", frequency), ("horizon", horizon)):
        if value:
            params[name] = value
    response = httpx.get(f"{_base_url(base_url)}/v1/leaderboard", params=params)
    response.raise_for_status()
    data = response.json()
    header = f"{'model':10} {'raw':>10} {'adjusted':>10} {'rate':>6} {'coverage':>9} {'avail':>6}"
    click.echo(header)
    for entry in data["entries"]:
        click.echo(
            f"{entry['model_id']:10} {entry['raw_mase']:>10.4f} "
            f"{entry['adjusted_mase']:>10.4f} {entry['participation_rate']:>6.2f} "
            f"{entry['coverage_count']:>9} {entry['n_available']:>6}"
        )


@main.group()
def models():
    """Model registry commands."""


@models.command("list")
@click.option("--base-url", default=None)
def models_list(base_url):
    response = httpx.get(f"{_base_url(base_url)}/v1/models")
    response.raise_for_status()
    for model in response.json()["models"]:
        click.echo(f"{model['model_id']}  {model['declared_name_version']}  ({model['mode']})")


@main.group()
def challenges():
    """Challenge listing commands."""


@challenges.command("list")
@click.option("--state", default=None)
@click.option("--base-url", default=None)
def challenges_list(state, base_url):
    params = {"state": state} if state else {}
    response = httpx.get(f"{_base_url(base_url)}/v1/challenges", params=params)
    response.raise_for_status()
    for challenge in response.json()["challenges"]:
        click.echo(
            f"{challenge['challenge_id']}  stage={challenge['stage']}  t_p={challenge['t_p']}"
        )


if __name__ == "__main__":
    main()
