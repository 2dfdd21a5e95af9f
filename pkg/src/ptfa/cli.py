"""Command line entry point: serve | simulate | metrics.

Exit codes, stable contract: 0 success, 1 data error (bad script or dataset),
2 usage or config error, 3 environment error (port taken, storage missing).
"""

from __future__ import annotations

import socket
import sys
from pathlib import Path

import click

from .config import BadConfig, load_config
from .metrics import SchemaViolation, compute_metrics, render_json, render_table
from .model import FacilitationModel
from .sim import BadScript, load_script, simulate
from .storage import StorageConflict, StorageUnavailable

EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_ENV = 3


@click.group()
def main() -> None:
    """Real-time facilitated group discussions: service, simulator, metrics."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
def serve(config_path: str | None) -> None:
    """Run the REST + WebSocket service until interrupted."""
    try:
        cfg = load_config(config_path)
    except BadConfig as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    try:
        from .service import create_app

        app = create_app(cfg)
    except StorageUnavailable as exc:
        click.echo(f"storage error: {exc}", err=True)
        sys.exit(EXIT_ENV)

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((cfg.service.host, cfg.service.port))
    except OSError as exc:
        sock.close()
        click.echo(f"cannot bind {cfg.service.host}:{cfg.service.port}: {exc}", err=True)
        sys.exit(EXIT_ENV)
    host, port = sock.getsockname()[:2]
    click.echo(f"ptfa service listening on http://{host}:{port}")

    import uvicorn

    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])


@main.command(name="simulate")
@click.argument("script_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--model", type=click.Choice(["0", "1"]), default="1", show_default=True)
@click.option("--scale", type=float, default=None, help="Clock scale; overrides the config.")
@click.option("--topic", type=int, default=0, show_default=True)
@click.option("--group-size", type=int, default=3, show_default=True)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default="./sim_out",
    show_default=True,
    help="Directory for the dataset export and tick log.",
)
def simulate_cmd(
    script_path: str,
    config_path: str | None,
    model: str,
    scale: float | None,
    topic: int,
    group_size: int,
    out_dir: str,
) -> None:
    """Run one scripted session to completion under a scaled clock."""
    try:
        cfg = load_config(config_path)
    except BadConfig as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    if group_size < 2:
        click.echo(f"group size must be at least 2, got {group_size}", err=True)
        sys.exit(EXIT_USAGE)
    if scale is not None and scale <= 0:
        click.echo(f"scale must be positive, got {scale}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        script = load_script(script_path)
        result = simulate(
            script,
            cfg,
            FacilitationModel(model),
            out_dir,
            scale=scale,
            topic_id=topic,
            group_size=group_size,
        )
    except BadScript as exc:
        click.echo(f"script error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except StorageConflict as exc:
        click.echo(f"output collision: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except StorageUnavailable as exc:
        click.echo(f"storage error: {exc}", err=True)
        sys.exit(EXIT_ENV)
    facilitator = sum(1 for r in result.reports if r.hat is not None or r.action.value == "baseline_posted")
    click.echo(f"session {result.session_id} complete in {result.wall_seconds:.1f}s wall time")
    click.echo(f"ticks: {len(result.reports) - 1} decisions, facilitator posts: {facilitator}")
    click.echo(f"export: {result.export_path}")
    click.echo(f"tick log: {result.ticks_path}")


@main.command()
@click.argument("paths", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["json", "table"]),
    default="json",
    show_default=True,
)
def metrics(paths: tuple[str, ...], fmt: str) -> None:
    """Compute transcript metrics over one or more dataset exports."""
    if not paths:
        click.echo("no input files given", err=True)
        sys.exit(EXIT_USAGE)
    try:
        result = compute_metrics(Path(p) for p in paths)
    except SchemaViolation as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    click.echo(render_json(result) if fmt == "json" else render_table(result))


if __name__ == "__main__":
    main()
