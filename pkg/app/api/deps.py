"""
Shared command dependencies.
Common flags, config resolution and run-directory setup used by every command.
"""

import argparse
from pathlib import Path

import structlog

from app.core import metrics
from app.core.config import get_settings
from app.core.logging import bind_run_context
from app.core.run_config import load_run_config
from app.db.storage import RunDirectory
from app.schemas import RunConfig

logger = structlog.get_logger(__name__)


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """--config, --seed and --out, shared by the run-producing commands."""
    parser.add_argument("--config", type=Path, required=True, help="TOML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the root seed")
    parser.add_argument("--out", default=None, help="override the output directory")


def resolve_config(args: argparse.Namespace) -> tuple[RunConfig, str]:
    """Load the config named by --config and apply the flag overrides."""
    config, text = load_run_config(args.config)
    return config.with_overrides(seed=args.seed, output_dir=args.out), text


def create_run(
    command: str, config: RunConfig, config_text: str, reset: bool = True
) -> RunDirectory:
    # the output location is not part of the run identity
    resolved = config.model_dump(mode="json", exclude={"output_dir"})
    run = RunDirectory.create(
        command, config.seed, resolved, config_text, config.output_dir, reset=reset
    )
    bind_run_context(command, run.run_id, config.seed)
    return run


def finish_run(run: RunDirectory) -> None:
    """Dump the metrics registry into the run directory when enabled."""
    if get_settings().ENABLE_METRICS:
        metrics.export_metrics(run.metrics_path)
    logger.info("Run complete", run_dir=str(run.root))
