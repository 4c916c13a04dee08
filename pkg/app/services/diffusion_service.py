"""
Conditional denoising diffusion over flattened precoder vectors.

The network predicts the clean vector w0 from (w_tau, tau, condition). Generation
uses the deterministic implicit sampler on a D-step subsequence of the T-step
schedule; the full ancestral chain is kept for evaluation-count comparisons.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import structlog

from app.core import metrics
from app.core.exceptions import EmptyDatasetError, ScheduleError, ShapeMismatchError
from app.schemas import DiffusionConfig
from app.services.neural_net import MLP, MomentumSGD

logger = structlog.get_logger(__name__)

Predictor = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    """beta[1..T] with alpha_bar[0] = 1 by convention."""

    betas: np.ndarray

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 1 or betas.size < 1:
            raise ScheduleError("the schedule needs at least one step")
        if ((betas <= 0) | (betas >= 1)).any():
            raise ScheduleError("every beta must lie in (0, 1)")
        object.__setattr__(self, "betas", betas)
        if not (np.diff(self.alpha_bars) < 0).all():
            raise ScheduleError("alpha_bar must be strictly decreasing")

    @classmethod
    def linear(cls, total_steps: int, beta_start: float, beta_end: float) -> "DiffusionSchedule":
        return cls(np.linspace(beta_start, beta_end, total_steps))

    @classmethod
    def from_config(cls, cfg: DiffusionConfig) -> "DiffusionSchedule":
        return cls.linear(cfg.total_steps, cfg.beta_start, cfg.beta_end)

    @property
    def total_steps(self) -> int:
        return int(self.betas.size)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        """Length T + 1, indexed by tau."""
        return np.concatenate([[1.0], np.cumprod(self.alphas)])

    def alpha_bar(self, tau: int) -> float:
        self.check_step(tau)
        return float(self.alpha_bars[tau])

    def check_step(self, tau: int) -> None:
        if not 0 <= tau <= self.total_steps:
            raise ScheduleError(f"diffusion step {tau} outside [0, {self.total_steps}]")

    def subsequence(self, ddim_steps: int) -> tuple[int, ...]:
        """Descending tau_D > ... > tau_1 evenly spread up to T."""
        if not 1 <= ddim_steps <= self.total_steps:
            raise ScheduleError(
                f"ddim_steps must lie in [1, {self.total_steps}], got {ddim_steps}"
            )
        taus = np.round(
            np.linspace(self.total_steps / ddim_steps, self.total_steps, ddim_steps)
        ).astype(int)
        return tuple(int(t) for t in taus[::-1])


def timestep_embedding(tau: int | np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding, shape (..., dim)."""
    half = dim // 2
    freqs = 1.0 / 10000.0 ** (np.arange(half) / max(half, 1))
    angles = np.asarray(tau, dtype=float)[..., None] * freqs
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros(emb.shape[:-1] + (1,))], axis=-1)
    return emb


def forward_noise(
    w0: np.ndarray, tau: int, schedule: DiffusionSchedule, noise: np.ndarray
) -> np.ndarray:
    """sqrt(abar) w0 + sqrt(1 - abar) eps."""
    abar = schedule.alpha_bar(tau)
    return np.sqrt(abar) * np.asarray(w0) + np.sqrt(1.0 - abar) * np.asarray(noise)


def estimate_noise(w_tau: np.ndarray, w0_hat: np.ndarray, abar: float) -> np.ndarray:
    """Noise implied by a w0 estimate; zero where no noise was ever added."""
    if abar >= 1.0:
        return np.zeros_like(w_tau)
    return (w_tau - np.sqrt(abar) * w0_hat) / np.sqrt(1.0 - abar)


def ddim_step(
    w0_hat: np.ndarray,
    w_tau: np.ndarray,
    tau: int,
    tau_prev: int,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """Deterministic update from tau to tau_prev < tau."""
    if tau_prev >= tau:
        raise ScheduleError(f"the sampler must move backwards, got {tau} -> {tau_prev}")
    abar_prev = schedule.alpha_bar(tau_prev)
    eps_hat = estimate_noise(w_tau, w0_hat, schedule.alpha_bar(tau))
    return np.sqrt(abar_prev) * w0_hat + np.sqrt(1.0 - abar_prev) * eps_hat


def ddim_sample(
    predictor: Predictor, w_start: np.ndarray, schedule: DiffusionSchedule, ddim_steps: int
) -> tuple[np.ndarray, int]:
    """Run the implicit sampler from tau_D down to 0; returns (w0, evaluations)."""
    taus = schedule.subsequence(ddim_steps)
    w = np.asarray(w_start, dtype=float)
    evaluations = 0
    for tau, tau_prev in zip(taus, (*taus[1:], 0), strict=True):
        w0_hat = predictor(w, tau)
        evaluations += 1
        w = ddim_step(w0_hat, w, tau, tau_prev, schedule)
    metrics.PREDICTOR_EVALUATIONS.labels(sampler="ddim").inc(evaluations)
    return w, evaluations


def posterior_mean_variance(
    w0: np.ndarray, w_tau: np.ndarray, tau: int, schedule: DiffusionSchedule
) -> tuple[np.ndarray, float]:
    """Mean and variance of q(w_{tau-1} | w_tau, w0)."""
    if not 1 <= tau <= schedule.total_steps:
        raise ScheduleError(f"posterior step {tau} outside [1, {schedule.total_steps}]")
    abar = schedule.alpha_bars[tau]
    abar_prev = schedule.alpha_bars[tau - 1]
    beta = schedule.betas[tau - 1]
    coef_w0 = np.sqrt(abar_prev) * beta / (1.0 - abar)
    coef_wt = np.sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar)
    variance = float(beta * (1.0 - abar_prev) / (1.0 - abar))
    return coef_w0 * np.asarray(w0) + coef_wt * np.asarray(w_tau), variance


def ancestral_sample(
    predictor: Predictor,
    w_start: np.ndarray,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Full T-step stochastic chain; returns (w0, evaluations)."""
    w = np.asarray(w_start, dtype=float)
    evaluations = 0
    for tau in range(schedule.total_steps, 0, -1):
        w0_hat = predictor(w, tau)
        evaluations += 1
        mean, variance = posterior_mean_variance(w0_hat, w, tau, schedule)
        w = mean + np.sqrt(variance) * rng.standard_normal(w.shape)
    metrics.PREDICTOR_EVALUATIONS.labels(sampler="ancestral").inc(evaluations)
    return w, evaluations


class DiffusionModel:
    """Denoiser network theta_d with its schedule and optimizer."""

    def __init__(
        self,
        vector_dim: int,
        condition_dim: int,
        cfg: DiffusionConfig,
        rng: np.random.Generator,
    ):
        self.config = cfg
        self.vector_dim = vector_dim
        self.condition_dim = condition_dim
        self.schedule = DiffusionSchedule.from_config(cfg)
        self.schedule.subsequence(cfg.ddim_steps)
        width = cfg.hidden_width
        self.net = MLP(
            (vector_dim + cfg.time_embedding_dim + condition_dim, width, width, vector_dim), rng
        )
        self.optimizer = MomentumSGD(self.net.params, cfg.learning_rate, cfg.momentum)

    def _inputs(self, w_tau: np.ndarray, tau: np.ndarray | int, c: np.ndarray) -> np.ndarray:
        w_tau = np.atleast_2d(w_tau)
        c = np.atleast_2d(c)
        if w_tau.shape[1] != self.vector_dim or c.shape[1] != self.condition_dim:
            raise ShapeMismatchError(
                f"expected vectors of {self.vector_dim} and conditions of {self.condition_dim}"
            )
        tau = np.broadcast_to(np.asarray(tau), (w_tau.shape[0],))
        emb = timestep_embedding(tau, self.config.time_embedding_dim)
        conditions = np.broadcast_to(c, (w_tau.shape[0], c.shape[1]))
        return np.concatenate([w_tau, emb, conditions], axis=1)

    def predict_w0(self, w_tau: np.ndarray, tau: np.ndarray | int, c: np.ndarray) -> np.ndarray:
        out = self.net.forward(self._inputs(w_tau, tau, c))
        return out[0] if np.ndim(w_tau) == 1 else out

    def train(
        self,
        w0: np.ndarray,
        conditions: np.ndarray,
        rng: np.random.Generator,
        updates: int | None = None,
    ) -> list[float]:
        """Regress the clean vector from noised copies at random steps."""
        w0 = np.atleast_2d(np.asarray(w0, dtype=float))
        if w0.shape[0] == 0:
            raise EmptyDatasetError("diffusion training needs at least one sample")
        conditions = np.atleast_2d(np.asarray(conditions, dtype=float))
        losses = []
        for _ in range(updates or self.config.updates_per_step):
            taus = rng.integers(1, self.schedule.total_steps + 1, size=w0.shape[0])
            noise = rng.standard_normal(w0.shape)
            abar = self.schedule.alpha_bars[taus][:, None]
            w_tau = np.sqrt(abar) * w0 + np.sqrt(1.0 - abar) * noise
            inputs = np.concatenate(
                [w_tau, timestep_embedding(taus, self.config.time_embedding_dim), conditions],
                axis=1,
            )
            loss, grads = self.net.mse_step(inputs, w0)
            self.optimizer.step(self.net.params, grads)
            losses.append(loss)
        return losses

    def generate(self, c: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """DDIM generation: D network evaluations."""
        start = rng.standard_normal(self.vector_dim)
        return ddim_sample(
            lambda w, tau: self.predict_w0(w, tau, c),
            start,
            self.schedule,
            self.config.ddim_steps,
        )

    def generate_full_chain(
        self, c: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, int]:
        """Ancestral generation: T network evaluations."""
        start = rng.standard_normal(self.vector_dim)
        return ancestral_sample(
            lambda w, tau: self.predict_w0(w, tau, c), start, self.schedule, rng
        )


def train_diffusion(
    w0: np.ndarray,
    conditions: np.ndarray,
    cfg: DiffusionConfig,
    rng: np.random.Generator,
    updates: int,
) -> tuple[DiffusionModel, list[float]]:
    """Fresh denoiser trained on (w0, condition) pairs."""
    w0 = np.atleast_2d(np.asarray(w0, dtype=float))
    if w0.size == 0:
        raise EmptyDatasetError("diffusion training needs at least one sample")
    conditions = np.atleast_2d(np.asarray(conditions, dtype=float))
    model = DiffusionModel(w0.shape[1], conditions.shape[1], cfg, rng)
    losses = model.train(w0, conditions, rng, updates)
    logger.debug("Diffusion model trained", updates=updates, final_loss=losses[-1])
    return model, losses
