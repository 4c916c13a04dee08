"""
Action space and environment step outcome types.
"""

from dataclasses import dataclass

import numpy as np

from app.core.exceptions import RangeError
from app.models.perception import FrameMetrics


@dataclass(frozen=True)
class KappaGrid:
    """Discrete Top-K ratios kappa_min + n * step for n < count."""

    kappa_min: float
    step: float
    count: int

    def __post_init__(self) -> None:
        if self.count < 1 or self.step <= 0:
            raise RangeError("kappa grid needs count >= 1 and a positive step")
        values = self.values
        if values[0] <= 0 or values[-1] > 1.0 + 1e-12:
            raise RangeError("kappa values must lie in (0, 1]")

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(
            min(1.0, round(self.kappa_min + n * self.step, 12)) for n in range(self.count)
        )

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> float:
        return self.values[index]


@dataclass(frozen=True)
class JointAction:
    """UAV selection mask, per-UAV kappa index and per-UAV precoder index."""

    uav_select: tuple[bool, ...]
    kappa_idx: tuple[int, ...]
    precoder_idx: tuple[int, ...]

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(u for u, flag in enumerate(self.uav_select) if flag)

    @property
    def selection_code(self) -> int:
        """Bitmask with UAV u at bit u."""
        return sum(1 << u for u in self.selected)

    def describe(self) -> dict[str, str]:
        return {
            "selection": "".join("1" if s else "0" for s in self.uav_select),
            "kappa": ";".join(str(k) for k in self.kappa_idx),
            "precoders": ";".join(str(p) for p in self.precoder_idx),
        }


@dataclass(frozen=True, eq=False)
class StepOutcome:
    """Utilities, latencies and reward of one environment step."""

    utility_pq: float
    utility_iou: float
    latency_max: float
    rates: np.ndarray
    latencies: np.ndarray
    payload_bits: np.ndarray
    sinr_db: np.ndarray
    reward: float
    frames: tuple[FrameMetrics, ...] = ()

    def same_as(self, other: "StepOutcome") -> bool:
        return (
            self.reward == other.reward
            and self.utility_pq == other.utility_pq
            and self.utility_iou == other.utility_iou
            and self.latency_max == other.latency_max
            and np.array_equal(self.rates, other.rates)
        )
