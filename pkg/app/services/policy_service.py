"""
Diffusion-guided decision policy.

A factored Q-network picks the UAV subset and per-UAV Top-K ratios; a
conditional diffusion model generates the precoders, which are projected onto
the codebook before the environment step.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import structlog

from app.core.exceptions import ArtifactFormatError, EmptyDatasetError
from app.core.seeding import substream
from app.models import ChannelRealization, JointAction, PrecoderCodebook
from app.schemas import CurveRecord, PolicyConfig, RunConfig
from app.services import scenario_service
from app.services.diffusion_service import DiffusionModel
from app.services.environment_service import PerceptionEnvironment, selections
from app.services.neural_net import MLP, MomentumSGD

logger = structlog.get_logger(__name__)

DIFFUSION_BATCH = 64


# Encodings


def selection_one_hot(uav_select: Sequence[bool]) -> np.ndarray:
    """One-hot over the 2^U - 1 non-empty subsets (index = bitmask - 1)."""
    code = sum(1 << u for u, flag in enumerate(uav_select) if flag)
    vec = np.zeros(2 ** len(uav_select) - 1)
    vec[code - 1] = 1.0
    return vec


def kappa_one_hot(action: JointAction, num_kappas: int) -> np.ndarray:
    """U x N_kappa indicators; rows of unselected UAVs stay zero."""
    vec = np.zeros((len(action.uav_select), num_kappas))
    for u in action.selected:
        vec[u, action.kappa_idx[u]] = 1.0
    return vec.ravel()


def channel_summary(realization: ChannelRealization) -> np.ndarray:
    """Magnitude (max-normalized) and phase / pi of the grid-averaged channel."""
    mean = realization.tensor.mean(axis=(1, 2))
    magnitude = np.abs(mean)
    peak = magnitude.max()
    magnitude = magnitude / peak if peak > 0 else magnitude
    return np.concatenate([magnitude.ravel(), (np.angle(mean) / np.pi).ravel()])


def state_features(env: PerceptionEnvironment) -> np.ndarray:
    """Channel summary plus per-view foreground fraction and visible-instance share."""
    scenario = env.scenario
    vehicles = max(len(scenario.tracks), 1)
    foreground, visible = [], []
    for uav in scenario.uavs:
        ids = scenario_service.render_view(scenario, uav, env.frame).instance_ids
        foreground.append(float(np.mean(ids > 0)))
        visible.append(np.unique(ids[ids > 0]).size / vehicles)
    return np.concatenate([channel_summary(env.channel), foreground, visible])


def condition_vector(action: JointAction, num_kappas: int, summary: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [selection_one_hot(action.uav_select), kappa_one_hot(action, num_kappas), summary]
    )


def precoder_vector(
    indices: Sequence[int], selected: Sequence[int], codebook: PrecoderCodebook, num_uavs: int
) -> np.ndarray:
    """U slots of t_x complex values, real/imag interleaved; unselected slots are zero."""
    slots = np.zeros((num_uavs, codebook.length), dtype=complex)
    for u in selected:
        slots[u] = codebook.entries[indices[u]]
    return np.stack([slots.real, slots.imag], axis=-1).ravel()


def unflatten_precoders(vector: np.ndarray, num_uavs: int, length: int) -> np.ndarray:
    pairs = np.asarray(vector, dtype=float).reshape(num_uavs, length, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def project_to_codebook(
    vector: np.ndarray, codebook: PrecoderCodebook, num_uavs: int
) -> tuple[int, ...]:
    """Nearest entry per UAV slot by maximal |<entry, w>|; ties go to the lower index."""
    slots = unflatten_precoders(vector, num_uavs, codebook.length)
    scores = np.abs(slots @ codebook.entries.conj().T)
    return tuple(int(i) for i in np.argmax(scores, axis=1))


# Q-network


class QSelector:
    """Q(s, a_U, a_k) = q_sel(s)[a_U] + mean over selected u of q_k(s, a_U)[u, k_u]."""

    def __init__(
        self,
        state_dim: int,
        num_uavs: int,
        num_kappas: int,
        cfg: PolicyConfig,
        rng: np.random.Generator,
    ):
        self.num_uavs = num_uavs
        self.num_kappas = num_kappas
        self.num_selections = 2**num_uavs - 1
        width = cfg.hidden_width
        self.selection_net = MLP((state_dim, width, width, self.num_selections), rng)
        self.kappa_net = MLP(
            (state_dim + self.num_selections, width, width, num_uavs * num_kappas), rng
        )
        self.selection_opt = MomentumSGD(self.selection_net.params, cfg.learning_rate, cfg.momentum)
        self.kappa_opt = MomentumSGD(self.kappa_net.params, cfg.learning_rate, cfg.momentum)
        self._selections = selections(num_uavs)

    def _kappa_inputs(self, state: np.ndarray) -> np.ndarray:
        states = np.repeat(np.atleast_2d(state), self.num_selections, axis=0)
        return np.concatenate([states, np.eye(self.num_selections)], axis=1)

    def q_values(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Selection head (n_sel,) and kappa head (n_sel, U, N_kappa)."""
        q_sel = self.selection_net.forward(state)[0]
        q_kappa = self.kappa_net.forward(self._kappa_inputs(state))
        return q_sel, q_kappa.reshape(self.num_selections, self.num_uavs, self.num_kappas)

    def value(self, state: np.ndarray, action: JointAction) -> float:
        q_sel, q_kappa = self.q_values(state)
        code = action.selection_code
        terms = [q_kappa[code - 1, u, action.kappa_idx[u]] for u in action.selected]
        return float(q_sel[code - 1] + np.mean(terms))

    def greedy(self, state: np.ndarray) -> JointAction:
        """Exact argmax of the factored Q over selections and kappas."""
        q_sel, q_kappa = self.q_values(state)
        best, best_value = None, -np.inf
        for code, select in enumerate(self._selections, start=1):
            chosen = [u for u, flag in enumerate(select) if flag]
            value = q_sel[code - 1] + np.mean([q_kappa[code - 1, u].max() for u in chosen])
            if best is None or value > best_value:
                kappa_idx = [0] * self.num_uavs
                for u in chosen:
                    kappa_idx[u] = int(np.argmax(q_kappa[code - 1, u]))
                best, best_value = (select, tuple(kappa_idx)), value
        return JointAction(best[0], best[1], (0,) * self.num_uavs)

    def random_action(self, rng: np.random.Generator) -> JointAction:
        """Uniform over every valid (selection, kappa) pair."""
        sizes = np.array(
            [self.num_kappas ** sum(select) for select in self._selections], dtype=float
        )
        select = self._selections[int(rng.choice(len(sizes), p=sizes / sizes.sum()))]
        kappa_idx = tuple(
            int(rng.integers(self.num_kappas)) if flag else 0 for flag in select
        )
        return JointAction(select, kappa_idx, (0,) * self.num_uavs)

    def act(self, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> JointAction:
        if rng.random() < epsilon:
            return self.random_action(rng)
        return self.greedy(state)

    def update(self, state: np.ndarray, action: JointAction, reward: float) -> float:
        """One regression step of Q(s, a) onto the immediate reward."""
        code = action.selection_code
        selected = action.selected
        q_sel = self.selection_net.forward(state)[0]
        kappa_input = np.concatenate(
            [np.atleast_2d(state), selection_one_hot(action.uav_select)[None]], axis=1
        )
        q_kappa = self.kappa_net.forward(kappa_input)[0].reshape(self.num_uavs, self.num_kappas)
        q = q_sel[code - 1] + np.mean([q_kappa[u, action.kappa_idx[u]] for u in selected])
        diff = q - reward

        grad_sel = np.zeros((1, self.num_selections))
        grad_sel[0, code - 1] = 2.0 * diff
        grad_kappa = np.zeros((self.num_uavs, self.num_kappas))
        for u in selected:
            grad_kappa[u, action.kappa_idx[u]] = 2.0 * diff / len(selected)
        self.selection_opt.step(self.selection_net.params, self.selection_net.backward(grad_sel))
        self.kappa_opt.step(
            self.kappa_net.params, self.kappa_net.backward(grad_kappa.reshape(1, -1))
        )
        return float(diff**2)


def _nan_mean(values: Sequence[float]) -> float:
    finite = [v for v in values if not np.isnan(v)]
    return float(np.mean(finite)) if finite else float("nan")


def epsilon_at(step: int, total_steps: int, cfg: PolicyConfig) -> float:
    """Linear decay from epsilon_start to epsilon_end over the decay window."""
    horizon = max(1.0, cfg.epsilon_decay_fraction * total_steps)
    frac = min(1.0, step / horizon)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


# Training


@dataclass
class Sample:
    vector: np.ndarray
    condition: np.ndarray
    reward: float


@dataclass
class TrainingResult:
    curves: list[CurveRecord]
    final_reward: float
    dataset_size: int
    evaluations: dict[str, int] = field(default_factory=dict)


class PolicyTrainer:
    """Alternates Q-selection, diffusion training, precoder generation and env steps.

    With ``use_search_labels`` the denoiser learns codebook-search precoders;
    otherwise it imitates its own best-rewarded generations per (env, action).
    """

    def __init__(
        self,
        envs: Sequence[PerceptionEnvironment],
        config: RunConfig,
        seed: int | None = None,
        alpha: float | None = None,
        latency_weight: float | None = None,
        use_search_labels: bool | None = None,
    ):
        if not envs:
            raise EmptyDatasetError("training needs at least one environment")
        self.envs = list(envs)
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.alpha = config.objective.alpha if alpha is None else alpha
        self.latency_weight = (
            config.objective.latency_weight if latency_weight is None else latency_weight
        )
        self.use_search_labels = (
            config.policy.use_search_labels if use_search_labels is None else use_search_labels
        )
        first = self.envs[0]
        self.num_uavs = first.num_uavs
        self.num_kappas = len(first.kappas)
        self.codebook = first.codebook

        self.states = [state_features(env) for env in self.envs]
        self.summaries = [channel_summary(env.channel) for env in self.envs]
        condition_dim = (
            self.num_selections + self.num_uavs * self.num_kappas + self.summaries[0].size
        )
        self.selector = QSelector(
            self.states[0].size,
            self.num_uavs,
            self.num_kappas,
            config.policy,
            substream(self.seed, "policy"),
        )
        self.diffusion = DiffusionModel(
            self.num_uavs * self.codebook.length * 2,
            condition_dim,
            config.diffusion,
            substream(self.seed, "diffusion", 0),
        )
        self.explore_rng = substream(self.seed, "exploration")
        self.diffusion_rng = substream(self.seed, "diffusion", 1)
        self.dataset: dict[tuple, Sample] = {}
        self.epoch = 0
        self.curves: list[CurveRecord] = []

    @property
    def num_selections(self) -> int:
        return 2**self.num_uavs - 1

    def _key(self, env_index: int, action: JointAction) -> tuple[int, ...]:
        kappas = tuple(action.kappa_idx[u] for u in action.selected)
        return (env_index, action.selection_code, *kappas)

    def _train_diffusion(self) -> float:
        if not self.dataset:
            return float("nan")
        samples = list(self.dataset.values())
        if len(samples) > DIFFUSION_BATCH:
            picks = self.diffusion_rng.choice(len(samples), DIFFUSION_BATCH, replace=False)
            samples = [samples[int(i)] for i in sorted(picks)]
        losses = self.diffusion.train(
            np.stack([s.vector for s in samples]),
            np.stack([s.condition for s in samples]),
            self.diffusion_rng,
        )
        return float(np.mean(losses))

    def generate_precoders(
        self, env_index: int, action: JointAction, rng: np.random.Generator
    ) -> tuple[int, ...]:
        condition = condition_vector(action, self.num_kappas, self.summaries[env_index])
        vector, _ = self.diffusion.generate(condition, rng)
        indices = project_to_codebook(vector, self.codebook, self.num_uavs)
        return tuple(indices[u] if action.uav_select[u] else 0 for u in range(self.num_uavs))

    def run_step(self, env_index: int, epsilon: float) -> tuple[float, float, float, float]:
        """One decision step; returns (reward, latency, q loss, diffusion loss)."""
        env = self.envs[env_index]
        state = self.states[env_index]
        chosen = self.selector.act(state, epsilon, self.explore_rng)
        condition = condition_vector(chosen, self.num_kappas, self.summaries[env_index])
        key = self._key(env_index, chosen)

        if self.use_search_labels and key not in self.dataset:
            labels = env.label_precoders(chosen)
            vector = precoder_vector(labels, chosen.selected, self.codebook, self.num_uavs)
            self.dataset[key] = Sample(vector, condition, 0.0)
        diffusion_loss = self._train_diffusion()

        precoders = self.generate_precoders(env_index, chosen, self.diffusion_rng)
        action = JointAction(chosen.uav_select, chosen.kappa_idx, precoders)
        outcome = env.step(action, self.alpha, self.latency_weight)
        reward = max(outcome.reward, self.config.objective.reward_floor)
        q_loss = self.selector.update(state, action, reward)

        if not self.use_search_labels:
            stored = self.dataset.get(key)
            if stored is None or reward > stored.reward:
                vector = precoder_vector(precoders, action.selected, self.codebook, self.num_uavs)
                self.dataset[key] = Sample(vector, condition, reward)
        return reward, outcome.latency_max, q_loss, diffusion_loss

    def train(
        self,
        epochs: int | None = None,
        until: int | None = None,
        on_epoch: Callable[["PolicyTrainer"], None] | None = None,
    ) -> list[CurveRecord]:
        """Train to ``epochs`` total epochs (stopping early at ``until``)."""
        total = epochs or self.config.policy.epochs
        stop = min(total, until) if until is not None else total
        total_steps = total * len(self.envs)
        while self.epoch < stop:
            rewards, latencies, q_losses, d_losses = [], [], [], []
            for env_index in range(len(self.envs)):
                step = self.epoch * len(self.envs) + env_index
                reward, lat, q_loss, d_loss = self.run_step(
                    env_index, epsilon_at(step, total_steps, self.config.policy)
                )
                rewards.append(reward)
                latencies.append(lat)
                q_losses.append(q_loss)
                d_losses.append(d_loss)
            record = CurveRecord(
                epoch=self.epoch,
                reward=float(np.mean(rewards)),
                latency=float(np.mean(latencies)),
                q_loss=float(np.mean(q_losses)),
                diffusion_loss=_nan_mean(d_losses),
            )
            self.curves.append(record)
            self.epoch += 1
            if on_epoch is not None:
                on_epoch(self)
        logger.info(
            "Policy training finished",
            epochs=self.epoch,
            final_reward=self.curves[-1].reward if self.curves else None,
            labels="search" if self.use_search_labels else "self",
        )
        return self.curves

    def greedy_action(self, env_index: int, rng: np.random.Generator) -> JointAction:
        chosen = self.selector.greedy(self.states[env_index])
        return JointAction(
            chosen.uav_select, chosen.kappa_idx, self.generate_precoders(env_index, chosen, rng)
        )

    def evaluate(self) -> float:
        """Mean reward of the greedy policy over all environments."""
        rng = substream(self.seed, "evaluation")
        rewards = []
        for env_index, env in enumerate(self.envs):
            outcome = env.step(self.greedy_action(env_index, rng), self.alpha, self.latency_weight)
            rewards.append(max(outcome.reward, self.config.objective.reward_floor))
        return float(np.mean(rewards))

    def result(self) -> TrainingResult:
        return TrainingResult(list(self.curves), self.evaluate(), len(self.dataset))

    # checkpoints

    def state_arrays(self) -> tuple[dict[str, np.ndarray], dict]:
        arrays: dict[str, np.ndarray] = {}
        nets = {
            "selection": (self.selector.selection_net, self.selector.selection_opt),
            "kappa": (self.selector.kappa_net, self.selector.kappa_opt),
            "diffusion": (self.diffusion.net, self.diffusion.optimizer),
        }
        for name, (net, opt) in nets.items():
            for n, (param, velocity) in enumerate(zip(net.params, opt.velocity, strict=True)):
                arrays[f"{name}_param{n}"] = param
                arrays[f"{name}_velocity{n}"] = velocity
        keys = list(self.dataset)
        width = 2 + self.num_uavs
        arrays["dataset_keys"] = np.array(
            [list(k) + [-1] * (width - len(k)) for k in keys], dtype=np.int64
        ).reshape(-1, width)
        arrays["dataset_vectors"] = np.array(
            [self.dataset[k].vector for k in keys]
        ).reshape(len(keys), self.diffusion.vector_dim)
        arrays["dataset_conditions"] = np.array(
            [self.dataset[k].condition for k in keys]
        ).reshape(len(keys), self.diffusion.condition_dim)
        arrays["dataset_rewards"] = np.array([self.dataset[k].reward for k in keys], dtype=float)
        meta = {
            "epoch": self.epoch,
            "seed": self.seed,
            "use_search_labels": self.use_search_labels,
            "layer_sizes": {name: list(net.sizes) for name, (net, _) in nets.items()},
            "activation": "tanh",
            "rng": {
                "exploration": self.explore_rng.bit_generator.state,
                "diffusion": self.diffusion_rng.bit_generator.state,
            },
            "curves": [c.model_dump() for c in self.curves],
        }
        return arrays, meta

    def load_state_arrays(self, arrays: dict[str, np.ndarray], meta: dict) -> None:
        nets = {
            "selection": (self.selector.selection_net, self.selector.selection_opt),
            "kappa": (self.selector.kappa_net, self.selector.kappa_opt),
            "diffusion": (self.diffusion.net, self.diffusion.optimizer),
        }
        for name, (net, opt) in nets.items():
            if list(net.sizes) != meta["layer_sizes"][name]:
                raise ArtifactFormatError(
                    f"checkpoint {name} network does not match this configuration"
                )
            for n, (param, velocity) in enumerate(zip(net.params, opt.velocity, strict=True)):
                param[...] = arrays[f"{name}_param{n}"]
                velocity[...] = arrays[f"{name}_velocity{n}"]
        self.dataset = {}
        for row, vector, condition, reward in zip(
            arrays["dataset_keys"],
            arrays["dataset_vectors"],
            arrays["dataset_conditions"],
            arrays["dataset_rewards"],
            strict=True,
        ):
            key = tuple(int(v) for v in row if v >= 0)
            self.dataset[key] = Sample(vector.copy(), condition.copy(), float(reward))
        self.epoch = int(meta["epoch"])
        self.explore_rng.bit_generator.state = meta["rng"]["exploration"]
        self.diffusion_rng.bit_generator.state = meta["rng"]["diffusion"]
        self.curves = [CurveRecord(**c) for c in meta["curves"]]


def oracle_reward(
    envs: Sequence[PerceptionEnvironment],
    alpha: float | None = None,
    latency_weight: float | None = None,
    floor: float | None = None,
) -> float:
    """Mean enumerated-optimum reward; the upper bound for a trained policy."""
    rewards = []
    for env in envs:
        _, outcome = env.best_action(alpha, latency_weight)
        rewards.append(outcome.reward if floor is None else max(outcome.reward, floor))
    return float(np.mean(rewards))


def train_policy(
    envs: Sequence[PerceptionEnvironment],
    config: RunConfig,
    seed: int | None = None,
    latency_weight: float | None = None,
    use_search_labels: bool | None = None,
) -> tuple[PolicyTrainer, TrainingResult]:
    trainer = PolicyTrainer(
        envs, config, seed, latency_weight=latency_weight, use_search_labels=use_search_labels
    )
    trainer.train()
    return trainer, trainer.result()
