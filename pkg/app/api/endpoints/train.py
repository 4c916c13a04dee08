"""
train command.
Trains the selection and precoder-generation policy, checkpointing after every epoch.
"""

import argparse

import structlog

from app.api.deps import add_common_arguments, create_run, finish_run, resolve_config
from app.core.exceptions import ArtifactNotFoundError
from app.db import storage
from app.services.experiment_service import build_environment
from app.services.policy_service import PolicyTrainer

logger = structlog.get_logger(__name__)

CHECKPOINT_NAME = "policy.npz"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="train the policy and write learning curves")
    add_common_arguments(parser)
    parser.add_argument(
        "--resume", action="store_true", help="continue from the run's last checkpoint"
    )
    parser.add_argument(
        "--stop-after",
        type=int,
        default=None,
        metavar="EPOCHS",
        help="stop once this many epochs are done (the schedule still spans policy.epochs)",
    )
    parser.set_defaults(handler=train)


def train(args: argparse.Namespace) -> int:
    """Train, checkpoint and write the curves ledger."""
    config, text = resolve_config(args)
    run = create_run("train", config, text, reset=not args.resume)
    checkpoint = run.checkpoint_dir / CHECKPOINT_NAME

    envs = [build_environment(config, s) for s in range(config.num_sequences)]
    trainer = PolicyTrainer(envs, config)
    if args.resume:
        if not checkpoint.is_file():
            raise ArtifactNotFoundError(f"nothing to resume, no checkpoint at {checkpoint}")
        arrays, meta = storage.load_checkpoint(checkpoint)
        trainer.load_state_arrays(arrays, meta)
        logger.info("Resuming training", epoch=trainer.epoch)

    def save(current: PolicyTrainer) -> None:
        arrays, meta = current.state_arrays()
        storage.save_checkpoint(checkpoint, arrays, meta)

    curves = trainer.train(until=args.stop_after, on_epoch=save)
    storage.write_records(run.ledger("curves"), curves)
    finish_run(run)
    logger.info(
        "Train command finished",
        run_id=run.run_id,
        epochs=trainer.epoch,
        final_reward=curves[-1].reward if curves else None,
    )
    print(run.root)
    return 0
