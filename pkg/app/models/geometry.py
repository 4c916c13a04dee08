"""
Camera and bird's-eye-view domain types.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from app.core.exceptions import RangeError, SpecMismatchError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units; i indexes rows, j indexes columns."""

    f_x: float
    f_y: float
    i_c: float
    j_c: float

    def __post_init__(self) -> None:
        if not (self.f_x > 0 and self.f_y > 0):
            raise RangeError(f"focal lengths must be positive, got {self.f_x}, {self.f_y}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f_x, 0.0, self.i_c], [0.0, self.f_y, self.j_c], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.f_x, 0.0, -self.i_c / self.f_x],
                [0.0, 1.0 / self.f_y, -self.j_c / self.f_y],
                [0.0, 0.0, 1.0],
            ]
        )

    def to_array(self) -> np.ndarray:
        return np.array([self.f_x, self.f_y, self.i_c, self.j_c])


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """Camera-to-world (LiDAR frame) rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=float)
        if rotation.shape != (3, 3):
            raise RangeError(f"rotation must be 3x3, got {rotation.shape}")
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9):
            raise RangeError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise RangeError("rotation is not proper (determinant != +1)")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    def inverse(self) -> "CameraExtrinsics":
        rotation_t = self.rotation.T
        return CameraExtrinsics(rotation_t, -rotation_t @ self.translation)


@dataclass(frozen=True)
class BevSpec:
    """Axis-aligned BEV plane; w indexes the X axis and h the Y axis."""

    h_min: float
    h_max: float
    w_min: float
    w_max: float
    delta_h: float
    delta_w: float

    def __post_init__(self) -> None:
        if self.delta_h <= 0 or self.delta_w <= 0:
            raise RangeError("BEV cell sizes must be positive")
        if self.w_cells < 1 or self.h_cells < 1:
            raise RangeError("BEV extent must hold at least one cell per axis")

    @property
    def w_cells(self) -> int:
        return int(np.floor((self.w_max - self.w_min) / self.delta_w))

    @property
    def h_cells(self) -> int:
        return int(np.floor((self.h_max - self.h_min) / self.delta_h))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.w_cells, self.h_cells)

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.h_min, self.h_max, self.w_min, self.w_max, self.delta_h, self.delta_w]
        )


@dataclass(frozen=True)
class LiftResult:
    """Outcome of lifting a single pixel onto the BEV plane."""

    cell: tuple[int, int] | None
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class BevGrid:
    """Per-cell occupancy counts plus one boolean mask per instance id."""

    spec: BevSpec
    counts: np.ndarray
    instances: Mapping[int, np.ndarray] = field(default_factory=dict)
    degenerate_pixels: int = 0

    @classmethod
    def empty(cls, spec: BevSpec) -> "BevGrid":
        return cls(spec, np.zeros(spec.shape, dtype=np.int64), {})

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    def ids_at(self, w: int, h: int) -> frozenset[int]:
        return frozenset(k for k, mask in self.instances.items() if mask[w, h])

    def require_same_spec(self, other: "BevGrid") -> None:
        if self.spec != other.spec:
            raise SpecMismatchError("BEV grids were built on different BEV specs")

    def equals(self, other: "BevGrid") -> bool:
        if self.spec != other.spec or not np.array_equal(self.counts, other.counts):
            return False
        if set(self.instances) != set(other.instances):
            return False
        return all(np.array_equal(m, other.instances[k]) for k, m in self.instances.items())
