"""
simulate command.
Evaluates the configured fixed action on every sequence and writes the step and frame ledgers.
"""

import argparse

import structlog

from app.api.deps import add_common_arguments, create_run, finish_run, resolve_config
from app.services import experiment_service

logger = structlog.get_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("simulate", help="simulate one fixed action per sequence")
    add_common_arguments(parser)
    parser.set_defaults(handler=simulate)


def simulate(args: argparse.Namespace) -> int:
    """Run the simulation and print the run directory."""
    config, text = resolve_config(args)
    run = create_run("simulate", config, text)
    steps = experiment_service.run_simulation(config, run)
    finish_run(run)
    logger.info("Simulate command finished", run_id=run.run_id, sequences=len(steps))
    print(run.root)
    return 0
