"""
Main command router that registers all subcommands.
Organizes the command surface in a modular structure.
"""

import argparse

from app.api.endpoints import report, simulate, sweep, train
from app.core.config import get_settings


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="uavsim",
        description=settings.APP_NAME,
    )
    parser.add_argument("--version", action="version", version=settings.version_string)
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    simulate.register(subparsers)
    train.register(subparsers)
    sweep.register(subparsers)
    report.register(subparsers)
    return parser
