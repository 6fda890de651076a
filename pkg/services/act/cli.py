"""
ACT command-line interface.

Subcommands: init, generate, run, sweep-alpha, export-embeddings.

Errors raised as ``ActError`` are logged and turned into the error's exit
code; anything else is logged with its traceback and exits 1.
"""

import functools
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import torch

from . import __version__
from .core.config import settings
from .core.exceptions import ActError, ConfigError
from .data.synthetic import write_cd_pair
from .schemas.config import default_config_json, load_run_config
from .training.ablation import VARIANTS
from .training.runner import STAGES, ActRunner
from .utils.logger import setup_logging

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = "2.0,2.25,2.5,2.75,3.0"


def _handle_errors(func):
    """Map ActError subclasses to their exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ActError as e:
            logger.error(f"{type(e).__name__}: {e.detail}")
            click.echo(f"error: {e.detail}", err=True)
            sys.exit(e.exit_code)
        except click.exceptions.Exit:
            raise
        except Exception as e:
            logger.exception(f"Unexpected error: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(1)

    return wrapper


def _parse_list(value: Optional[str], cast, name: str) -> Optional[List]:
    if value is None:
        return None
    try:
        items = [cast(v.strip()) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--{name} expects a comma-separated list, got {value!r}")
    if not items:
        raise ConfigError(f"--{name} is empty")
    return items


def _runner(config: str, out: Optional[str]) -> ActRunner:
    return ActRunner(load_run_config(config), out_dir=out)


@click.group()
@click.version_option(__version__, prog_name="act")
@click.option("--log-level", default=None, help="Override ACT_LOG_LEVEL")
@click.option("--json-logs/--text-logs", default=None, help="Force log format")
def cli(log_level: Optional[str], json_logs: Optional[bool]):
    """Anomaly-aware contrastive alignment for cross-domain graph anomaly detection."""
    setup_logging(level=log_level, json_logs=json_logs)
    torch.set_num_threads(settings.NUM_THREADS)


@cli.command()
@click.option("--out", "out", type=click.Path(dir_okay=False), default="act.json", show_default=True,
              help="Where to write the default configuration")
@_handle_errors
def init(out: str):
    """Write the full-default run configuration."""
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(default_config_json())
    click.echo(str(path))


@cli.command()
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out", type=click.Path(file_okay=False), required=True,
              help="Directory receiving source/, target/ and manifest.json")
@_handle_errors
def generate(config: str, out: str):
    """Generate the synthetic source/target dataset pair."""
    run_config = load_run_config(config)
    if run_config.data.generator is None:
        raise ConfigError(f"{config}: no generator section")
    paths = write_cd_pair(run_config.data.generator, out)
    for path in paths.values():
        click.echo(str(path))


@cli.command()
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--stage", type=click.Choice(STAGES), default="all", show_default=True)
@click.option("--variant", "variants", multiple=True, type=click.Choice(list(VARIANTS)),
              help="Variant(s) to run; repeatable (default: full)")
@click.option("--seeds", default=None, help="Comma-separated seeds (default: config seeds)")
@click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output root")
@_handle_errors
def run(config: str, stage: str, variants: tuple, seeds: Optional[str], out: Optional[str]):
    """Run one stage (or all) for every seed."""
    runner = _runner(config, out)
    aggregates = runner.run(
        stage=stage,
        variants=list(variants) or ["full"],
        seeds=_parse_list(seeds, int, "seeds"),
    )
    for name, aggregate in aggregates.items():
        click.echo(f"{name}: AUC-ROC {aggregate.auc_roc}  AUC-PR {aggregate.auc_pr}")


@cli.command("sweep-alpha")
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--alphas", default=DEFAULT_ALPHAS, show_default=True, help="Comma-separated alpha values")
@click.option("--variant", default="full", type=click.Choice([n for n, v in VARIANTS.items() if v.refit]),
              show_default=True)
@click.option("--seeds", default=None, help="Comma-separated seeds (default: config seeds)")
@click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output root")
@_handle_errors
def sweep_alpha(config: str, alphas: str, variant: str, seeds: Optional[str], out: Optional[str]):
    """Self-labelling sensitivity to alpha."""
    runner = _runner(config, out)
    frame = runner.sweep_alpha(
        _parse_list(alphas, float, "alphas"),
        seeds=_parse_list(seeds, int, "seeds"),
        variant=variant,
    )
    click.echo(frame.to_string(index=False))


@cli.command("export-embeddings")
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--stage", type=click.Choice(["align", "selflabel"]), default="align", show_default=True)
@click.option("--seed", type=int, default=None, help="Seed directory to export (default: first config seed)")
@click.option("--variant", default="full", type=click.Choice(list(VARIANTS)), show_default=True)
@click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output root")
@_handle_errors
def export_embeddings(config: str, stage: str, seed: Optional[int], variant: str, out: Optional[str]):
    """Export source and target embeddings of a checkpoint as CSV."""
    runner = _runner(config, out)
    seed = runner.config.seeds[0] if seed is None else seed
    click.echo(str(runner.export_embeddings(seed, stage=stage, variant=variant)))


def main():
    cli()


if __name__ == "__main__":
    main()
