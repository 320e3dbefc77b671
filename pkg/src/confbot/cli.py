"""Command-line entry points: serve, analytics, profile administration."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import load_config
from .logstore import conversation_length_histogram, read_log_dir, turns_per_skill
from .profiles import ProfileStore


@click.group()
def main() -> None:
    """Conversational conference assistant."""


@main.command()
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="JSON config file")
@click.option("--poi-catalog", type=click.Path(exists=True), default=None)
@click.option("--programme", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=None)
@click.option("--host", default=None)
@click.option("--log-dir", type=click.Path(), default=None)
@click.option("--tau", type=float, default=None, help="NLU fallback threshold")
@click.option("--capacity", type=int, default=None)
@click.option("--static-dir", type=click.Path(), default=None,
              help="Directory with the built web chat bundle (served at /chat)")
def serve(config_file, poi_catalog, programme, port, host, log_dir, tau, capacity, static_dir):
    """Run the assistant server (REST + WebSocket)."""
    import uvicorn

    from .assistant import Assistant
    from .gateway import create_app

    config = load_config(
        config_file,
        poi_catalog_path=poi_catalog,
        programme_path=programme,
        port=port,
        host=host,
        log_dir=log_dir,
        tau=tau,
        capacity=capacity,
        static_dir=static_dir,
    )
    assistant = Assistant(config)
    app = create_app(assistant)
    click.echo(f"serving on http://{config.host}:{config.port} (ws at /ws)")
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


@main.command()
@click.option("--log-dir", type=click.Path(exists=True), required=True)
@click.option("--histogram", "which", flag_value="histogram",
              help="Conversation-length distribution only")
@click.option("--skills", "which", flag_value="skills",
              help="Turns-per-skill distribution only")
@click.option("--format", "fmt", type=click.Choice(["json", "table"]), default="table")
def analytics(log_dir, which, fmt):
    """Compute conversation analytics from the stored logs."""
    records = read_log_dir(log_dir)
    out: dict = {}
    if which in (None, "histogram"):
        out["conversation_lengths"] = conversation_length_histogram(records)
    if which in (None, "skills"):
        out["turns_per_skill"] = turns_per_skill(records)
    if fmt == "json":
        click.echo(json.dumps(out, indent=2, sort_keys=True))
        return
    if "conversation_lengths" in out:
        click.echo("conversation length (user turns)  sessions")
        for length in sorted(out["conversation_lengths"]):
            click.echo(f"{length:>32}  {out['conversation_lengths'][length]}")
    if "turns_per_skill" in out:
        click.echo("skill  bot turns")
        for skill in sorted(out["turns_per_skill"]):
            click.echo(f"{skill:>5}  {out['turns_per_skill'][skill]}")


@main.group()
def profiles() -> None:
    """Inspect and administer user profiles."""


@profiles.command("delete")
@click.argument("user_id")
@click.option("--log-dir", type=click.Path(exists=True), required=True)
def profiles_delete(user_id, log_dir):
    """Remove a profile and scrub its session attributions."""
    store = ProfileStore(log_dir)
    if store.delete(user_id):
        click.echo(f"deleted {user_id}")
    else:
        click.echo(f"no such profile: {user_id}", err=True)
        sys.exit(1)


@profiles.command("export")
@click.option("--log-dir", type=click.Path(exists=True), required=True)
@click.option("--output", "-o", type=click.Path(), default=None)
def profiles_export(log_dir, output):
    """Write all profiles as a JSON document."""
    store = ProfileStore(log_dir)
    doc = json.dumps(store.export_doc(), indent=2, ensure_ascii=False)
    if output:
        Path(output).write_text(doc + "\n", encoding="utf-8")
        click.echo(f"wrote {output}")
    else:
        click.echo(doc)


@profiles.command("import")
@click.argument("source", type=click.Path(exists=True))
@click.option("--log-dir", type=click.Path(), required=True)
def profiles_import(source, log_dir):
    """Load profiles from a JSON document into the store."""
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    store = ProfileStore(log_dir)
    doc = json.loads(Path(source).read_text(encoding="utf-8"))
    count = store.import_doc(doc)
    click.echo(f"imported {count} profiles")


if __name__ == "__main__":
    main()
