"""
Optimization environment: latency, weighted utility, reward and constraint checks.
"""

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog

from app.core import metrics
from app.core.exceptions import ConstraintViolationError, EmptySelectionError, RangeError
from app.models import (
    ChannelRealization,
    JointAction,
    KappaGrid,
    LabeledBev,
    LinkState,
    PrecoderCodebook,
    Scenario,
    SparseImage,
    StepOutcome,
)
from app.schemas import KappaConfig, LinkConfig, ObjectiveConfig, RunConfig
from app.services import (
    channel_service,
    link_service,
    perception_service,
    scenario_service,
    sparsifier_service,
)

logger = structlog.get_logger(__name__)

UNIT_NORM_TOLERANCE = 1e-9


def latency(payload_bits: float, rate_bps: float) -> float:
    """D / R in seconds; a zero rate makes the UAV unusable (infinite latency)."""
    if rate_bps <= 0:
        return math.inf
    return payload_bits / rate_bps


def max_latency(selected: Sequence[int], latencies: Sequence[float]) -> float:
    if len(selected) == 0:
        raise EmptySelectionError("maximum latency needs at least one selected UAV")
    return max(latencies[u] for u in selected)


def weighted_reward(
    utility_pq: float, utility_iou: float, latency_max: float, alpha: float, latency_weight: float
) -> float:
    """alpha * PQ + (1 - alpha) * IoU - lambda * worst latency."""
    utility = alpha * utility_pq + (1.0 - alpha) * utility_iou
    if latency_weight == 0:
        return utility
    return utility - latency_weight * latency_max


def action_space_sizes(num_uavs: int, num_kappas: int, codebook_size: int) -> tuple[int, int, int]:
    """(2^U - 1, N_kappa^U, |codebook|^U)."""
    if min(num_uavs, num_kappas, codebook_size) < 1:
        raise RangeError("action space sizes need positive arguments")
    return 2**num_uavs - 1, num_kappas**num_uavs, codebook_size**num_uavs


def kappa_grid(cfg: KappaConfig) -> KappaGrid:
    return KappaGrid(cfg.kappa_min, cfg.step, cfg.count)


def selections(num_uavs: int) -> tuple[tuple[bool, ...], ...]:
    """Every non-empty UAV subset, ordered by bitmask code 1 .. 2^U - 1."""
    return tuple(
        tuple(bool(code >> u & 1) for u in range(num_uavs)) for code in range(1, 2**num_uavs)
    )


def validate_action(
    action: JointAction, num_uavs: int, kappas: KappaGrid, codebook: PrecoderCodebook
) -> None:
    """Raise naming the first violated constraint."""
    if len(action.uav_select) != num_uavs or not any(action.uav_select):
        raise ConstraintViolationError(
            "binary_association", "the selection must cover every UAV and pick at least one"
        )
    if len(action.kappa_idx) != num_uavs or len(action.precoder_idx) != num_uavs:
        raise ConstraintViolationError(
            "binary_association", "kappa and precoder choices need one entry per UAV"
        )
    for u in action.selected:
        if not 0 <= action.kappa_idx[u] < len(kappas):
            raise ConstraintViolationError(
                "payload_bounds", f"UAV {u} kappa index {action.kappa_idx[u]} is off the grid"
            )
        if not 0 <= action.precoder_idx[u] < len(codebook):
            raise ConstraintViolationError(
                "codebook_membership",
                f"UAV {u} precoder index {action.precoder_idx[u]} is not in the codebook",
            )
        norm = np.linalg.norm(codebook.entries[action.precoder_idx[u]])
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise ConstraintViolationError("unit_norm", f"precoder of UAV {u} has norm {norm}")


@dataclass(frozen=True)
class Perception:
    utility_pq: float
    utility_iou: float
    frames: tuple


class PerceptionEnvironment:
    """One frame of one sequence: a frozen channel plus the UAV views.

    Sparse images, perception results, link rates and precoder labels are
    memoized, so repeated actions cost nothing after the first evaluation.
    """

    def __init__(
        self,
        scenario: Scenario,
        channel: ChannelRealization,
        codebook: PrecoderCodebook,
        objective: ObjectiveConfig,
        kappas: KappaGrid,
        link: LinkConfig,
        noise_var: float,
        frame: int | None = None,
        evaluation_frames: tuple[int, ...] | None = None,
    ):
        self.scenario = scenario
        self.channel = channel
        self.codebook = codebook
        self.objective = objective
        self.kappas = kappas
        self.link = link
        self.noise_var = noise_var
        self.frame = scenario.observation_frame if frame is None else frame
        self.evaluation_frames = evaluation_frames or scenario.prediction_frames
        self.num_uavs = len(scenario.uavs)
        self._ground_truth = {
            f: perception_service.ground_truth_labels(scenario.ground_truth[f])
            for f in self.evaluation_frames
        }
        self._sparse: dict[tuple[int, int], SparseImage] = {}
        self._wire_bits: dict[tuple[int, int], int] = {}
        self._perception: dict[tuple, Perception] = {}
        self._rates: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
        self._labels: dict[tuple, tuple[int, ...]] = {}

    @classmethod
    def from_config(
        cls,
        scenario: Scenario,
        config: RunConfig,
        codebook: PrecoderCodebook | None = None,
        frame: int | None = None,
        evaluation_frames: tuple[int, ...] | None = None,
    ) -> "PerceptionEnvironment":
        """Environment at ``frame`` with the channel realized from the scenario seed."""
        frame = scenario.observation_frame if frame is None else frame
        channel = channel_service.realize_channel(
            scenario, config.channel, frame, scenario.config.rng_seed
        )
        array = config.channel.uav_array
        codebook = codebook or link_service.build_codebook(
            array.n_x, array.n_y, config.link.oversampling_x, config.link.oversampling_y
        )
        noise_var = channel_service.noise_variance(config.channel, config.link.tx_power_w)
        return cls(
            scenario,
            channel,
            codebook,
            config.objective,
            kappa_grid(config.kappa),
            config.link,
            noise_var,
            frame,
            evaluation_frames,
        )

    # sparsified views

    def sparse_view(self, u: int, kappa_index: int) -> SparseImage:
        """Top-K image of UAV ``u`` as reconstructed after the simulated wire transfer."""
        key = (u, kappa_index)
        if key not in self._sparse:
            view = scenario_service.render_view(self.scenario, self.scenario.uavs[u], self.frame)
            scores = sparsifier_service.neighborhood_score(
                sparsifier_service.importance_map(view)
            )
            sparse = sparsifier_service.top_k_select(view, scores, self.kappas[kappa_index])
            payload, bits = sparsifier_service.encode_wire(sparse, self.objective.bits_per_pixel)
            self._sparse[key] = sparsifier_service.decode_wire(payload)
            self._wire_bits[key] = bits
        return self._sparse[key]

    def wire_bits(self, u: int, kappa_index: int) -> int:
        self.sparse_view(u, kappa_index)
        return self._wire_bits[(u, kappa_index)]

    def payload_bits(self, kappa_index: int) -> int:
        """Data size of one view; the wire format carries the same pixel count."""
        return sparsifier_service.payload_bits(
            self.scenario.image_shape,
            self.scenario.config.camera.channels,
            self.kappas[kappa_index],
            self.objective.bits_per_pixel,
        )

    def payloads(self, action: JointAction) -> np.ndarray:
        return np.array(
            [self.payload_bits(action.kappa_idx[u]) for u in action.selected], dtype=float
        )

    # perception

    def prediction(self, selected: tuple[int, ...], kappa_idx: tuple[int, ...]) -> LabeledBev:
        sparse = {u: self.sparse_view(u, kappa_idx[u]) for u in selected}
        return perception_service.proxy_perceive(self.scenario, self.frame, selected, sparse)

    def perception(self, action: JointAction) -> Perception:
        selected = action.selected
        key = (selected, tuple(action.kappa_idx[u] for u in selected))
        if key not in self._perception:
            prediction = self.prediction(selected, action.kappa_idx)
            frames = tuple(
                perception_service.evaluate_frame(prediction, self._ground_truth[f], f)
                for f in self.evaluation_frames
            )
            self._perception[key] = Perception(
                perception_service.mean_panoptic_over_frames([m.panoptic for m in frames]),
                perception_service.mean_iou_over_frames([m.iou for m in frames]),
                frames,
            )
        return self._perception[key]

    # link

    def link_state(self, action: JointAction) -> LinkState:
        association = np.array(action.uav_select, dtype=np.int64)[:, None]
        return LinkState(
            association,
            np.array(action.precoder_idx),
            np.full(self.num_uavs, self.link.tx_power_w),
            self.noise_var,
        )

    def rates(self, action: JointAction) -> tuple[np.ndarray, np.ndarray]:
        """Rates (bit/s) and mean SINR (dB) of the selected UAVs."""
        selected = action.selected
        key = (selected, tuple(action.precoder_idx[u] for u in selected))
        if key not in self._rates:
            result, sinr_db = link_service.link_rates(
                self.channel, self.link_state(action), self.codebook
            )
            self._rates[key] = (result.rate_bps, sinr_db)
        return self._rates[key]

    def label_precoders(self, action: JointAction) -> tuple[int, ...]:
        """Codebook-search precoders for the action's selection and kappas.

        Returns one index per UAV; unselected UAVs get index 0.
        """
        selected = action.selected
        by_rate = self.link.label_objective == "per_uav_rate"
        key = (
            (selected,)
            if by_rate
            else (selected, tuple(action.kappa_idx[u] for u in selected))
        )
        if key not in self._labels:
            result = link_service.exhaustive_precoder_search(
                self.channel,
                self.link_state(action),
                self.codebook,
                objective=self.link.label_objective,
                mode=self.link.search_mode,
                max_sweeps=self.link.max_sweeps,
                joint_limit=self.link.joint_limit,
                payload_bits=None if by_rate else self.payloads(action),
            )
            indices = [0] * self.num_uavs
            for u, index in zip(selected, result.indices, strict=True):
                indices[u] = int(index)
            self._labels[key] = tuple(indices)
        return self._labels[key]

    # step

    def step(
        self,
        action: JointAction,
        alpha: float | None = None,
        latency_weight: float | None = None,
    ) -> StepOutcome:
        """Evaluate an action; weights default to the objective config."""
        validate_action(action, self.num_uavs, self.kappas, self.codebook)
        alpha = self.objective.alpha if alpha is None else alpha
        lam = self.objective.latency_weight if latency_weight is None else latency_weight

        perceived = self.perception(action)
        rates, sinr_db = self.rates(action)
        payloads = self.payloads(action)
        latencies = np.array(
            [latency(d, r) for d, r in zip(payloads, rates, strict=True)], dtype=float
        )
        worst = max_latency(range(len(latencies)), latencies)
        reward = weighted_reward(perceived.utility_pq, perceived.utility_iou, worst, alpha, lam)

        metrics.ENV_STEPS.inc()
        if math.isfinite(worst):
            metrics.STEP_LATENCY.observe(worst)
        return StepOutcome(
            perceived.utility_pq,
            perceived.utility_iou,
            worst,
            rates,
            latencies,
            payloads,
            sinr_db,
            reward,
            perceived.frames,
        )

    # enumeration

    def actions(self) -> list[JointAction]:
        """Every (selection, kappa) pair with its search-labelled precoders."""
        result = []
        for select in selections(self.num_uavs):
            chosen = [u for u, flag in enumerate(select) if flag]
            for combo in itertools.product(range(len(self.kappas)), repeat=len(chosen)):
                kappa_idx = [0] * self.num_uavs
                for u, k in zip(chosen, combo, strict=True):
                    kappa_idx[u] = k
                draft = JointAction(select, tuple(kappa_idx), (0,) * self.num_uavs)
                result.append(
                    JointAction(select, tuple(kappa_idx), self.label_precoders(draft))
                )
        return result

    def best_action(
        self, alpha: float | None = None, latency_weight: float | None = None
    ) -> tuple[JointAction, StepOutcome]:
        """Enumerated optimum over selections and kappas; first maximum wins."""
        best = None
        for action in self.actions():
            outcome = self.step(action, alpha, latency_weight)
            if best is None or outcome.reward > best[1].reward:
                best = (action, outcome)
        logger.debug(
            "Enumerated optimum",
            action=best[0].describe(),
            reward=best[1].reward,
        )
        return best


def step(
    scenario: Scenario,
    frame: int,
    channel: ChannelRealization,
    action: JointAction,
    alpha: float,
    latency_weight: float,
    config: RunConfig | None = None,
    codebook: PrecoderCodebook | None = None,
) -> StepOutcome:
    """Single environment step with a fresh environment."""
    config = config or RunConfig()
    array = config.channel.uav_array
    codebook = codebook or link_service.build_codebook(
        array.n_x, array.n_y, config.link.oversampling_x, config.link.oversampling_y
    )
    env = PerceptionEnvironment(
        scenario,
        channel,
        codebook,
        config.objective,
        kappa_grid(config.kappa),
        config.link,
        channel_service.noise_variance(config.channel, config.link.tx_power_w),
        frame,
    )
    return env.step(action, alpha, latency_weight)
