"""
sweep command.
Aggregates perception and link statistics along the lambda, kappa or UAV-count axis.
"""

import argparse

import structlog
from pydantic import ValidationError

from app.api.deps import add_common_arguments, create_run, finish_run, resolve_config
from app.core.exceptions import ConfigurationError
from app.schemas import RunConfig
from app.services import experiment_service

logger = structlog.get_logger(__name__)

POINT_FIELDS = {"lambda": "lambda_points", "kappa": "kappa_points", "uav_count": "uav_counts"}


def parse_points(text: str) -> tuple[float, ...]:
    """Comma-separated numbers, e.g. ``0.1,0.5,0.9``."""
    try:
        points = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid point list {text!r}") from exc
    if not points:
        raise argparse.ArgumentTypeError("at least one point is required")
    return points


def with_points(config: RunConfig, axis: str, points: tuple[float, ...] | None) -> RunConfig:
    """Copy of the config whose sweep section carries the requested points."""
    if points is None:
        return config
    data = config.model_dump(mode="json")
    values = [int(p) for p in points] if axis == "uav_count" else list(points)
    data["sweep"][POINT_FIELDS[axis]] = values
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"--points rejected: {exc.errors()[0]['msg']}") from exc


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("sweep", help="sweep one axis and write the aggregated ledger")
    add_common_arguments(parser)
    parser.add_argument("--axis", choices=experiment_service.SWEEP_AXES, required=True)
    parser.add_argument(
        "--points", type=parse_points, default=None, help="comma-separated axis values"
    )
    parser.set_defaults(handler=sweep)


def sweep(args: argparse.Namespace) -> int:
    config, text = resolve_config(args)
    config = with_points(config, args.axis, args.points)
    run = create_run(f"sweep-{args.axis}", config, text)
    points = experiment_service.default_points(config, args.axis)
    records = experiment_service.run_sweep(config, args.axis, points, run)
    finish_run(run)
    logger.info(
        "Sweep command finished",
        run_id=run.run_id,
        axis=args.axis,
        crossings=sum(r.crossing for r in records),
    )
    print(run.root)
    return 0
