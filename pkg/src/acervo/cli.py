"""Command-line orchestrator: one subcommand per pipeline job."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .config import PipelineConfig, SourceConfig, load_config
from .errors import PipelineError
from .pipeline import RunMetrics, run_pipeline, run_stage
from .store import PipelineState, Store


def _setup_logging() -> None:
    root = logging.getLogger("acervo")
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        root.setLevel(logging.INFO)


def _echo_metrics(metrics: RunMetrics, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(metrics.to_dict(), ensure_ascii=False))
        return
    for stage, n in metrics.processed.items():
        failures = metrics.failures.get(stage, 0)
        click.echo(f"{stage}: processed={n} failures={failures}")
    click.echo(
        f"tokens: prompt={metrics.prompt_tokens} completion={metrics.completion_tokens}"
        f" total={metrics.total_tokens}"
    )
    click.echo(f"duration: {metrics.duration_s:.2f}s tokens_per_hour={metrics.tokens_per_hour:,.0f}")


@click.group()
@click.option(
    "-c",
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Pipeline configuration YAML.",
)
@click.option("--workers", type=int, default=None, help="Override the configured worker count.")
@click.option("--batch", type=int, default=None, help="Override the configured claim batch size.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx: click.Context, config_path: str, workers: int | None, batch: int | None, as_json: bool):
    """Metadata enrichment pipeline for digitized archival documents."""
    _setup_logging()
    try:
        config = load_config(config_path).with_overrides(workers=workers, batch_size=batch)
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc
    ctx.obj = {"config": config, "as_json": as_json}


def _run(ctx: click.Context, stage: str, sources=None) -> None:
    config: PipelineConfig = ctx.obj["config"]
    try:
        metrics = run_stage(config, stage, sources=sources)
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc
    _echo_metrics(metrics, ctx.obj["as_json"])


@main.command()
@click.option("--dir", "directory", type=click.Path(exists=True, file_okay=False), default=None,
              help="Scan this directory instead of the configured sources.")
@click.option("--model", default=None, help="Description model for --dir candidates.")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Register rows of this CSV manifest instead of the configured sources.")
@click.pass_context
def ingest(ctx: click.Context, directory: str | None, model: str | None, manifest: str | None):
    """Register candidate files (state NEW)."""
    sources = None
    if directory or manifest:
        sources = []
        if directory:
            if not model:
                raise click.UsageError("--dir requires --model")
            sources.append(SourceConfig(type="directory", path=Path(directory), model=model))
        if manifest:
            sources.append(SourceConfig(type="manifest", path=Path(manifest)))
    elif not ctx.obj["config"].sources:
        raise click.UsageError("no sources configured; pass --dir/--model or --manifest")
    _run(ctx, "ingest", sources=sources)


@main.command()
@click.pass_context
def include(ctx: click.Context):
    """Locate and attach extracted text (NEW -> INCLUDED)."""
    _run(ctx, "include")


@main.command()
@click.pass_context
def gate(ctx: click.Context):
    """Score OCR quality (INCLUDED -> EMBEDDED | QUALITY_REJECTED)."""
    _run(ctx, "gate")


@main.command()
@click.pass_context
def infer(ctx: click.Context):
    """Enrich with the configured LLM endpoint (EMBEDDED -> INFERRED)."""
    _run(ctx, "infer")


@main.command()
@click.pass_context
def upload(ctx: click.Context):
    """Export to the repository (INFERRED -> UPLOADED)."""
    _run(ctx, "upload")


@main.command()
@click.pass_context
def run(ctx: click.Context):
    """All five stages in order."""
    config: PipelineConfig = ctx.obj["config"]
    try:
        metrics = run_pipeline(config)
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc
    _echo_metrics(metrics, ctx.obj["as_json"])


@main.command()
@click.pass_context
def status(ctx: click.Context):
    """Per-state record counts and the metrics of the last run."""
    config: PipelineConfig = ctx.obj["config"]
    try:
        store = Store(config.store_path)
        counts = store.stats()
        last_run = store.get_meta("last_run")
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc
    if ctx.obj["as_json"]:
        click.echo(
            json.dumps(
                {
                    "states": {state.value: n for state, n in counts.items()},
                    "total": sum(counts.values()),
                    "last_run": last_run,
                },
                ensure_ascii=False,
            )
        )
        return
    width = max(len(state.value) for state in PipelineState)
    for state in PipelineState:
        click.echo(f"{state.value:<{width}}  {counts[state]}")
    click.echo(f"{'total':<{width}}  {sum(counts.values())}")
    if last_run:
        click.echo(f"last run: {json.dumps(last_run, ensure_ascii=False)}")


@main.command()
@click.pass_context
def dump(ctx: click.Context):
    """All records and the transition log as JSON Lines."""
    config: PipelineConfig = ctx.obj["config"]
    try:
        store = Store(config.store_path)
        for line in store.dump():
            click.echo(line)
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    main()
