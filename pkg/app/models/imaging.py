"""
Importance maps and Top-K sparse images.
"""

from dataclasses import dataclass

import numpy as np

from app.models.scene import DenseImage


@dataclass(frozen=True, eq=False)
class ImportanceMap:
    """Single-channel X x Y importance values."""

    values: np.ndarray


@dataclass(frozen=True, eq=False)
class SparseImage:
    """Top-K pixel mask with the retained pixel values.

    ``indices`` are the row-major flat indices of the retained pixels in
    ascending order and ``retained`` holds their values in that order.
    """

    mask: np.ndarray
    indices: np.ndarray
    retained: np.ndarray
    kappa: float
    source_shape: tuple[int, int, int]
    instance_ids: np.ndarray | None = None

    @property
    def count(self) -> int:
        return int(self.indices.size)

    def equals(self, other: "SparseImage") -> bool:
        return (
            self.source_shape == other.source_shape
            and self.kappa == other.kappa
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.retained, other.retained)
        )


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Dense image rebuilt from a sparse one, with the fallback-fill tally."""

    image: DenseImage
    fallback_pixels: int
