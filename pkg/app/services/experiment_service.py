"""
Experiment orchestration: single simulations, trend sweeps and run reports.
"""

from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd
import structlog

from app.core.config import get_settings
from app.core.exceptions import ArtifactNotFoundError, ConfigurationError
from app.core.seeding import substream
from app.db import storage
from app.db.storage import RunDirectory
from app.models import JointAction, Scenario
from app.schemas import (
    FrameMetricRecord,
    RunConfig,
    StepRecord,
    SweepRecord,
)
from app.services import (
    perception_service,
    policy_service,
    scenario_service,
    sparsifier_service,
)
from app.services.environment_service import PerceptionEnvironment

logger = structlog.get_logger(__name__)

SWEEP_AXES = ("lambda", "kappa", "uav_count")
LEDGERS = ("steps", "frames", "curves", "sweep")


def _join(values: Sequence) -> str:
    return ";".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in values)


def map_points(func: Callable, items: Sequence, workers: int | None = None) -> list:
    """Ordered map, in a process pool when more than one worker is configured."""
    workers = workers or get_settings().SIM_WORKERS
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def build_environment(
    config: RunConfig, sequence: int, evaluation_frames: tuple[int, ...] | None = None
) -> PerceptionEnvironment:
    scenario = scenario_service.generate_scenario(config.scenario_for(sequence))
    return PerceptionEnvironment.from_config(
        scenario, config, evaluation_frames=evaluation_frames
    )


# simulate


def simulate_action(config: RunConfig, env: PerceptionEnvironment) -> JointAction:
    """Configured selection (default: every UAV) at one kappa, search-labelled precoders."""
    num_uavs = env.num_uavs
    chosen = config.simulate.selection or tuple(range(num_uavs))
    select = tuple(u in chosen for u in range(num_uavs))
    kappa_idx = tuple(config.simulate.kappa_index if flag else 0 for flag in select)
    draft = JointAction(select, kappa_idx, (0,) * num_uavs)
    return JointAction(select, kappa_idx, env.label_precoders(draft))


def simulate_sequence(
    config: RunConfig, sequence: int
) -> tuple[StepRecord, list[FrameMetricRecord]]:
    env = build_environment(config, sequence)
    action = simulate_action(config, env)
    outcome = env.step(action)
    described = action.describe()
    step = StepRecord(
        sequence=sequence,
        frame=env.frame,
        selection=described["selection"],
        kappa=_join([env.kappas[k] for k in action.kappa_idx]),
        precoders=described["precoders"],
        rates_bps=_join([float(r) for r in outcome.rates]),
        latency_max_s=outcome.latency_max,
        utility_iou=outcome.utility_iou,
        utility_pq=outcome.utility_pq,
        reward=outcome.reward,
    )
    frames = [
        FrameMetricRecord(
            sequence=sequence,
            frame=m.frame,
            iou=m.iou,
            pq=m.panoptic.pq,
            sq=m.panoptic.sq,
            rq=m.panoptic.rq,
            tp=m.panoptic.tp,
            fp=m.panoptic.fp,
            fn=m.panoptic.fn,
        )
        for m in outcome.frames
    ]
    return step, frames


def run_simulation(config: RunConfig, run: RunDirectory) -> list[StepRecord]:
    """Simulate every sequence and write ledgers plus sequence-0 artifacts."""
    results = map_points(_SimulateTask(config), list(range(config.num_sequences)))
    steps = [step for step, _ in results]
    frames = [row for _, rows in results for row in rows]
    storage.write_records(run.ledger("steps"), steps)
    storage.write_records(run.ledger("frames"), frames)

    env = build_environment(config, 0)
    scenario_service.save_scenario(env.scenario, run.scenario_path)
    exports = run.root / "exports"
    storage.export_channel(env.channel, exports / "channel")
    storage.export_codebook_csv(env.codebook, exports / "codebook.csv")
    storage.export_bev_csv(env.scenario.ground_truth[env.frame], exports / "bev_ground_truth.csv")
    logger.info(
        "Simulation finished",
        sequences=len(steps),
        mean_reward=float(np.mean([s.reward for s in steps])),
    )
    return steps


class _SimulateTask:
    def __init__(self, config: RunConfig):
        self.config_json = config.model_dump_json()

    def __call__(self, sequence: int):
        return simulate_sequence(RunConfig.model_validate_json(self.config_json), sequence)


# trend sweeps


def perception_at(
    scenario: Scenario, selected: Sequence[int], kappa: float, frame: int
) -> tuple[float, float]:
    """IoU and PQ of the proxy perceiver against the same frame's ground truth."""
    sparse = {}
    for u in selected:
        view = scenario_service.render_view(scenario, scenario.uavs[u], frame)
        scores = sparsifier_service.neighborhood_score(sparsifier_service.importance_map(view))
        sparse[u] = sparsifier_service.top_k_select(view, scores, kappa)
    prediction = perception_service.proxy_perceive(scenario, frame, tuple(selected), sparse)
    truth = perception_service.ground_truth_labels(scenario.ground_truth[frame])
    metrics = perception_service.evaluate_frame(prediction, truth, frame)
    return metrics.iou, metrics.panoptic.pq


def spread_order(num_uavs: int) -> tuple[int, ...]:
    """UAV indices ordered so every prefix is spread as evenly as possible around the ring."""
    order = [0] if num_uavs else []
    remaining = list(range(1, num_uavs))

    def gap(u: int) -> int:
        return min(min(abs(u - v), num_uavs - abs(u - v)) for v in order)

    while remaining:
        pick = max(remaining, key=lambda u: (gap(u), -u))
        order.append(pick)
        remaining.remove(pick)
    return tuple(order)


class _TrendTask:
    """Per-sequence trend values; picklable for the worker pool."""

    def __init__(self, config: RunConfig, axis: str, points: Sequence[float]):
        self.config_json = config.model_dump_json()
        self.axis = axis
        self.points = tuple(points)

    def __call__(self, sequence: int) -> list[tuple[float, float]]:
        config = RunConfig.model_validate_json(self.config_json)
        scenario = scenario_service.generate_scenario(config.scenario_for(sequence))
        frame = scenario.observation_frame
        if self.axis == "kappa":
            everyone = tuple(range(len(scenario.uavs)))
            return [perception_at(scenario, everyone, k, frame) for k in self.points]
        order = spread_order(len(scenario.uavs))
        kappa = config.sweep.fixed_kappa
        # nested prefixes so larger sets always contain smaller ones
        return [
            perception_at(scenario, sorted(order[: int(n)]), kappa, frame)
            for n in self.points
        ]


def trend_sweep(config: RunConfig, axis: str, points: Sequence[float]) -> list[SweepRecord]:
    """Mean IoU / PQ over sequences for each kappa or UAV-count point."""
    per_sequence = map_points(_TrendTask(config, axis, points), list(range(config.num_sequences)))
    values = np.array(per_sequence, dtype=float)  # (sequences, points, 2)
    camera = config.scenario.camera
    records = []
    for n, point in enumerate(points):
        kappa = point if axis == "kappa" else config.sweep.fixed_kappa
        per_uav = sparsifier_service.payload_bits(
            (camera.image_height, camera.image_width),
            camera.channels,
            kappa,
            config.objective.bits_per_pixel,
        )
        uavs = int(point) if axis == "uav_count" else config.scenario.num_uavs
        records.append(
            SweepRecord(
                axis=axis,
                value=float(point),
                mean_iou=float(values[:, n, 0].mean()),
                mean_pq=float(values[:, n, 1].mean()),
                payload_bits=float(per_uav * uavs),
            )
        )
    return records


# lambda sweep


class _OracleLambdaTask:
    def __init__(self, config: RunConfig, points: Sequence[float]):
        self.config_json = config.model_dump_json()
        self.points = tuple(points)

    def __call__(self, sequence: int) -> list[dict]:
        config = RunConfig.model_validate_json(self.config_json)
        env = build_environment(config, sequence)
        rows = []
        for lam in self.points:
            _, outcome = env.best_action(latency_weight=lam)
            rows.append(_outcome_row(outcome))
        return rows


def _outcome_row(outcome) -> dict:
    return {
        "iou": outcome.utility_iou,
        "pq": outcome.utility_pq,
        "latency": outcome.latency_max,
        "reward": outcome.reward,
        "sinr_db": float(np.mean(outcome.sinr_db)),
        "min_rate": float(np.min(outcome.rates)),
        "total_rate": float(np.sum(outcome.rates)),
        "payload": float(np.sum(outcome.payload_bits)),
    }


def _policy_lambda_rows(config: RunConfig, points: Sequence[float]) -> list[list[dict]]:
    envs = [build_environment(config, s) for s in range(config.num_sequences)]
    per_point = []
    for lam in points:
        trainer, _ = policy_service.train_policy(envs, config, latency_weight=lam)
        rng = substream(trainer.seed, "evaluation")
        per_point.append(
            [
                _outcome_row(env.step(trainer.greedy_action(i, rng), latency_weight=lam))
                for i, env in enumerate(envs)
            ]
        )
    # (sequences, points)
    return [list(row) for row in zip(*per_point, strict=True)]


def _min_max(values: np.ndarray) -> np.ndarray:
    span = values.max() - values.min()
    if not np.isfinite(span) or span == 0:
        return np.zeros_like(values)
    return (values - values.min()) / span


def crossing_flags(utility: Sequence[float], sinr_db: Sequence[float]) -> list[bool]:
    """Flag the points where the normalized utility and SINR curves swap order."""
    diff = _min_max(np.asarray(utility, dtype=float)) - _min_max(np.asarray(sinr_db, dtype=float))
    flags = [False] * len(diff)
    for n in range(1, len(diff)):
        flags[n] = bool(diff[n - 1] * diff[n] < 0 or (diff[n] == 0 and diff[n - 1] != 0))
    return flags


def lambda_sweep(config: RunConfig, points: Sequence[float]) -> list[SweepRecord]:
    """Mean utility, latency, SINR and rates at each latency weight."""
    if config.sweep.lambda_solver == "oracle":
        rows = map_points(_OracleLambdaTask(config, points), list(range(config.num_sequences)))
    else:
        rows = _policy_lambda_rows(config, points)
    frame = pd.DataFrame(
        [dict(row, point=n) for per_seq in rows for n, row in enumerate(per_seq)]
    )
    means = frame.groupby("point", sort=True).mean()
    mins = frame.groupby("point", sort=True)["min_rate"].min()
    alpha = config.objective.alpha
    utility = alpha * means["pq"] + (1.0 - alpha) * means["iou"]
    flags = crossing_flags(utility.to_numpy(), means["sinr_db"].to_numpy())
    records = []
    for n, lam in enumerate(points):
        records.append(
            SweepRecord(
                axis="lambda",
                value=float(lam),
                mean_iou=float(means.loc[n, "iou"]),
                mean_pq=float(means.loc[n, "pq"]),
                mean_latency_s=float(means.loc[n, "latency"]),
                mean_reward=float(means.loc[n, "reward"]),
                mean_sinr_db=float(means.loc[n, "sinr_db"]),
                min_rate_bps=float(mins.loc[n]),
                total_rate_bps=float(means.loc[n, "total_rate"]),
                payload_bits=float(means.loc[n, "payload"]),
                crossing=flags[n],
            )
        )
    return records


def default_points(config: RunConfig, axis: str) -> tuple[float, ...]:
    if axis == "lambda":
        return config.sweep.lambda_points
    if axis == "kappa":
        return config.sweep.kappa_points
    return tuple(float(n) for n in config.sweep.uav_counts)


def run_sweep(
    config: RunConfig, axis: str, points: Sequence[float] | None, run: RunDirectory
) -> list[SweepRecord]:
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    points = tuple(points or default_points(config, axis))
    if axis == "lambda":
        records = lambda_sweep(config, points)
    else:
        records = trend_sweep(config, axis, points)
    storage.write_records(run.ledger("sweep"), records)
    logger.info("Sweep finished", axis=axis, points=len(points))
    return records


# report


def communication_costs(config: RunConfig) -> dict[str, float]:
    """Per-frame image payload against the BEV-feature exchange baseline."""
    camera = config.scenario.camera
    image_bits = sparsifier_service.payload_bits(
        (camera.image_height, camera.image_width),
        camera.channels,
        config.sweep.fixed_kappa,
        config.objective.bits_per_pixel,
    )
    report = config.report
    feature_bits = sparsifier_service.feature_payload_bits(
        report.feature_channels, report.feature_size, report.feature_ratio, report.feature_bits
    )
    costs = {
        "image_payload_bits": float(image_bits),
        "feature_payload_bits": float(feature_bits),
        "simulated_cost_ratio": sparsifier_service.cost_ratio(image_bits, feature_bits),
    }
    if report.reference_costs is not None:
        proposed, baseline = report.reference_costs
        costs["reference_cost_ratio"] = sparsifier_service.cost_ratio(proposed, baseline)
    return costs


def _ledger_summary(name: str, frame: pd.DataFrame) -> dict[str, float]:
    numeric = frame.select_dtypes(include="number")
    summary = {f"{name}.rows": float(len(frame))}
    for column in numeric.columns:
        summary[f"{name}.mean_{column}"] = float(numeric[column].mean())
    return summary


def build_report(run: RunDirectory) -> tuple[str, pd.DataFrame]:
    """Human-readable summary and a long-format table of every ledger."""
    config = RunConfig.model_validate_json(run.read_text("config.resolved.json"))
    present = {name: run.ledger(name) for name in LEDGERS if run.ledger(name).is_file()}
    if not present:
        raise ArtifactNotFoundError(f"no ledgers found in {run.root}")

    summary: dict[str, float] = {}
    long_frames = []
    for name, path in present.items():
        frame = storage.read_records(path)
        summary.update(_ledger_summary(name, frame))
        numeric = frame.select_dtypes(include="number").reset_index(names="row")
        melted = numeric.melt(id_vars="row", var_name="metric", value_name="value")
        melted.insert(0, "ledger", name)
        long_frames.append(melted)
    summary.update(communication_costs(config))

    lines = [f"run: {run.run_id}", f"version: {run.read_text('VERSION').strip()}"]
    lines += [f"{key}: {value:.10g}" for key, value in summary.items()]
    if "reference_cost_ratio" in summary:
        lines.append(f"reference cost ratio: {100 * summary['reference_cost_ratio']:.1f}%")
    text = "\n".join(lines) + "\n"
    return text, pd.concat(long_frames, ignore_index=True)


def run_report(run_dir: Path) -> str:
    run = RunDirectory.open(run_dir)
    text, table = build_report(run)
    (run.root / "report.txt").write_text(text, encoding="utf-8")
    table.to_csv(
        run.root / "report_long.csv", index=False, float_format="%.10g", lineterminator="\n"
    )
    logger.info("Report written", run_dir=str(run.root), rows=len(table))
    return text
