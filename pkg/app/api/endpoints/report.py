"""
report command.
Summarizes an existing run directory.
"""

import argparse
from pathlib import Path

from app.services import experiment_service


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("report", help="summarize the ledgers of a run directory")
    parser.add_argument("run_dir", type=Path, help="directory written by another command")
    parser.set_defaults(handler=report)


def report(args: argparse.Namespace) -> int:
    """Write report.txt and report_long.csv, echo the summary."""
    text = experiment_service.run_report(args.run_dir)
    print(text, end="")
    return 0
