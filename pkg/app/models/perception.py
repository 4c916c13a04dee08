"""
Labelled BEV maps and panoptic matching results.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from app.core.exceptions import RangeError
from app.models.geometry import BevSpec


@dataclass(frozen=True, eq=False)
class LabeledBev:
    """Binary vehicle mask plus instances as sorted flat cell-index arrays."""

    spec: BevSpec
    semantic: np.ndarray
    instances: Mapping[int, np.ndarray] = field(default_factory=dict)
    source_ids: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        semantic = np.asarray(self.semantic, dtype=bool)
        if semantic.shape != self.spec.shape:
            raise RangeError(
                f"semantic mask shape {semantic.shape} does not match {self.spec.shape}"
            )
        object.__setattr__(self, "semantic", semantic)

    @classmethod
    def from_instances(
        cls,
        spec: BevSpec,
        instances: Mapping[int, np.ndarray],
        source_ids: Mapping[int, int] | None = None,
    ) -> "LabeledBev":
        """Build from per-instance cell sets; the mask is their union."""
        semantic = np.zeros(spec.shape, dtype=bool)
        cells = {}
        seen = 0
        for instance_id, flat in instances.items():
            flat = np.unique(np.asarray(flat, dtype=np.int64))
            semantic.flat[flat] = True
            seen += flat.size
            cells[int(instance_id)] = flat
        if seen != int(semantic.sum()):
            raise RangeError("instance cell sets must be disjoint")
        return cls(spec, semantic, cells, dict(source_ids or {}))

    @property
    def is_empty(self) -> bool:
        return not self.semantic.any()


@dataclass(frozen=True)
class MatchResult:
    """True positives as (pred id, gt id, IoU), plus unmatched ids."""

    tp: tuple[tuple[int, int, float], ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]


@dataclass(frozen=True)
class PanopticResult:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    empty: bool = False


@dataclass(frozen=True)
class FrameMetrics:
    """Per-frame IoU and panoptic quality."""

    frame: int
    iou: float
    panoptic: PanopticResult
