"""
Channel, codebook and uplink link-state types.
"""

from dataclasses import dataclass, field

import numpy as np

from app.core.exceptions import ConstraintViolationError, RangeError


@dataclass(frozen=True)
class PathParams:
    """One propagation path: complex gain, delay, Doppler and angle pairs."""

    gain: complex
    delay: float
    doppler: float
    aoa_az: float
    aoa_el: float
    aod_az: float
    aod_el: float

    def __post_init__(self) -> None:
        if self.delay < 0:
            raise RangeError(f"path delay must be non-negative, got {self.delay}")
        if not np.isfinite(abs(self.gain)):
            raise RangeError("path gain must be finite")


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array, optionally dual-polarized."""

    n_x: int
    n_y: int
    spacing: float
    polarization_pairs: int = 1

    def __post_init__(self) -> None:
        if self.n_x < 1 or self.n_y < 1:
            raise RangeError("array dimensions must be >= 1")
        if self.spacing <= 0:
            raise RangeError("element spacing must be positive")
        if self.polarization_pairs not in (1, 2):
            raise RangeError("polarization_pairs must be 1 or 2")

    @property
    def elements_per_polarization(self) -> int:
        return self.n_x * self.n_y

    @property
    def num_elements(self) -> int:
        return self.polarization_pairs * self.n_x * self.n_y


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """H[u, k, s] as an r_x x t_x matrix per UAV, subcarrier and symbol."""

    tensor: np.ndarray
    carrier_hz: float
    subcarrier_spacing_hz: float
    los_paths: tuple[PathParams, ...] = ()
    frame: int = 0

    @property
    def num_uavs(self) -> int:
        return int(self.tensor.shape[0])

    @property
    def num_subcarriers(self) -> int:
        return int(self.tensor.shape[1])

    @property
    def num_symbols(self) -> int:
        return int(self.tensor.shape[2])

    @property
    def rx_antennas(self) -> int:
        return int(self.tensor.shape[3])

    @property
    def tx_antennas(self) -> int:
        return int(self.tensor.shape[4])

    @property
    def bandwidth_hz(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing_hz


@dataclass(frozen=True, eq=False)
class PrecoderCodebook:
    """Unit-norm Type-I precoders and their (n_x, n_y, m) labels."""

    entries: np.ndarray
    labels: tuple[tuple[int, int, int], ...]
    n_x: int
    n_y: int
    o_x: int
    o_y: int

    def __len__(self) -> int:
        return int(self.entries.shape[0])

    @property
    def length(self) -> int:
        return int(self.entries.shape[1])

    def index_of(self, n_x: int, n_y: int, m: int) -> int:
        return (n_x * (self.o_y * self.n_y) + n_y) * 4 + m


@dataclass(frozen=True, eq=False)
class LinkState:
    """UAV-BS association, precoder choice, transmit power and noise level."""

    association: np.ndarray
    precoder_index: np.ndarray
    power: np.ndarray
    noise_var: float

    def __post_init__(self) -> None:
        association = np.asarray(self.association, dtype=np.int64)
        if association.ndim == 1:
            association = association[:, None]
        if not np.isin(association, (0, 1)).all():
            raise ConstraintViolationError(
                "binary_association", "association entries must be 0 or 1"
            )
        if (association.sum(axis=1) > 1).any():
            raise ConstraintViolationError(
                "binary_association", "a UAV may associate with at most one BS"
            )
        power = np.asarray(self.power, dtype=float)
        if (power <= 0).any():
            raise RangeError("transmit powers must be positive")
        if not self.noise_var > 0:
            raise RangeError("noise variance must be positive")
        object.__setattr__(self, "association", association)
        object.__setattr__(self, "power", power)
        object.__setattr__(
            self, "precoder_index", np.asarray(self.precoder_index, dtype=np.int64)
        )

    def selected(self, bs: int = 0) -> np.ndarray:
        """Indices of UAVs associated with ``bs``, ascending."""
        return np.flatnonzero(self.association[:, bs] == 1)

    def with_precoders(self, indices: np.ndarray) -> "LinkState":
        return LinkState(self.association, np.asarray(indices), self.power, self.noise_var)


@dataclass(frozen=True, eq=False)
class RateResult:
    """Per-selected-UAV spectral efficiency (bit/symbol) and rate (bit/s)."""

    spectral_efficiency: np.ndarray
    rate_bps: np.ndarray


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Outcome of a codebook search."""

    indices: np.ndarray
    objective: float
    mode: str
    sweeps: int = 0
    history: tuple[float, ...] = field(default_factory=tuple)
