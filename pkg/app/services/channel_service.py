"""
Geometry-based wideband MIMO channel with Rician LoS/NLoS mixing on an OFDM grid.
"""

from collections.abc import Sequence

import numpy as np
import structlog

from app.core.exceptions import RangeError
from app.core.seeding import substream
from app.models import ArrayGeometry, ChannelRealization, PathParams, Scenario
from app.schemas import ArrayConfig, ChannelConfig
from app.services.geometry_service import NADIR_ROTATION

logger = structlog.get_logger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_WAVELENGTH = SPEED_OF_LIGHT / 3.5e9


def array_geometry(array: ArrayConfig, wavelength: float) -> ArrayGeometry:
    return ArrayGeometry(
        array.n_x, array.n_y, array.spacing_wavelengths * wavelength, array.polarization_pairs
    )


def array_response(geom: ArrayGeometry, az: float, el: float, wavelength: float) -> np.ndarray:
    """Single-polarization UPA response a_x (x) a_y, unit norm."""
    ratio = geom.spacing / wavelength
    n_x = np.arange(geom.n_x)
    n_y = np.arange(geom.n_y)
    a_x = np.exp(2j * np.pi * ratio * n_x * np.sin(el) * np.cos(az)) / np.sqrt(geom.n_x)
    a_y = np.exp(2j * np.pi * ratio * n_y * np.sin(el) * np.sin(az)) / np.sqrt(geom.n_y)
    return np.kron(a_x, a_y)


def polarized_component(
    gamma: np.ndarray, a_r: np.ndarray, a_t: np.ndarray
) -> np.ndarray:
    """Dual-polarized rank-one path: polarization block gains times a_r a_t^H."""
    return np.kron(gamma, np.outer(a_r, a_t.conj()))


def path_component(
    p: PathParams,
    tx_geom: ArrayGeometry,
    rx_geom: ArrayGeometry,
    t: float,
    f: float,
    wavelength: float = DEFAULT_WAVELENGTH,
) -> np.ndarray:
    """rho e^{j2 pi nu t} e^{-j2 pi f tau} a_r(theta) a_t(phi)^H."""
    a_r = array_response(rx_geom, p.aoa_az, p.aoa_el, wavelength)
    a_t = array_response(tx_geom, p.aod_az, p.aod_el, wavelength)
    pol_r, pol_t = rx_geom.polarization_pairs, tx_geom.polarization_pairs
    # co-located sub-arrays see the same phase front
    gamma = np.ones((pol_r, pol_t)) / np.sqrt(pol_r * pol_t)
    phase = np.exp(2j * np.pi * p.doppler * t) * np.exp(-2j * np.pi * f * p.delay)
    return p.gain * phase * polarized_component(gamma, a_r, a_t)


def rician_mix(los: np.ndarray, nlos_paths: Sequence[np.ndarray], k_r: float) -> np.ndarray:
    """sqrt(k/(k+1)) H_LoS + sqrt(1/(k+1)) sum of NLoS paths."""
    if k_r < 0:
        raise RangeError("Rician factor must be non-negative")
    scattered = np.zeros_like(los, dtype=complex)
    for path in nlos_paths:
        scattered = scattered + path
    return np.sqrt(k_r / (k_r + 1.0)) * los + np.sqrt(1.0 / (k_r + 1.0)) * scattered


def bs_rotation(azimuth_deg: float) -> np.ndarray:
    """Vertical BS panel: local y is world up, local z points along the azimuth."""
    a = np.deg2rad(azimuth_deg)
    s, c = np.sin(a), np.cos(a)
    return np.array([[-s, 0.0, c], [c, 0.0, s], [0.0, 1.0, 0.0]])


def local_angles(rotation: np.ndarray, direction: np.ndarray) -> tuple[float, float]:
    """(az, el) of a world direction in an array frame; el is measured from the normal."""
    local = rotation.T @ (direction / np.linalg.norm(direction))
    el = float(np.arccos(np.clip(local[2], -1.0, 1.0)))
    az = float(np.arctan2(local[1], local[0]))
    return az, el


def subcarrier_frequencies(cfg: ChannelConfig) -> np.ndarray:
    k = np.arange(cfg.num_subcarriers)
    return (k - (cfg.num_subcarriers - 1) / 2.0) * cfg.subcarrier_spacing_hz


def symbol_times(cfg: ChannelConfig, start: float) -> np.ndarray:
    symbol = (1.0 + cfg.cyclic_prefix_fraction) / cfg.subcarrier_spacing_hz
    return start + symbol * np.arange(cfg.num_symbols)


def noise_variance(cfg: ChannelConfig, tx_power_w: float) -> float:
    """Noise level giving the configured SNR at the reference distance."""
    return tx_power_w / 10.0 ** (cfg.snr_db / 10.0)


class ChannelService:
    """Draws per-frame channel realizations between every UAV and the BS."""

    def __init__(self, config: ChannelConfig):
        self.config = config
        self.wavelength = config.wavelength
        self.uav_geom = array_geometry(config.uav_array, self.wavelength)
        self.bs_geom = array_geometry(config.bs_array, self.wavelength)
        self.bs_position = np.array(config.bs_position, dtype=float)
        self.bs_rotation = bs_rotation(config.bs_boresight_azimuth_deg)

    def los_path(self, uav_position: np.ndarray) -> PathParams:
        """LoS path parameters from the UAV-BS geometry (angles at both arrays)."""
        to_uav = np.asarray(uav_position, dtype=float) - self.bs_position
        distance = float(np.linalg.norm(to_uav))
        aoa_az, aoa_el = local_angles(self.bs_rotation, to_uav)
        aod_az, aod_el = local_angles(NADIR_ROTATION, -to_uav)
        amplitude = (self.config.reference_distance / distance) ** (
            self.config.path_loss_exponent / 2.0
        )
        gain = amplitude * np.exp(-2j * np.pi * distance / self.wavelength)
        return PathParams(
            complex(gain),
            distance / SPEED_OF_LIGHT,
            self.config.los_doppler_hz,
            aoa_az,
            aoa_el,
            aod_az,
            aod_el,
        )

    def _polarization_gains(self, rng: np.random.Generator, los: bool) -> np.ndarray:
        pol_r = self.bs_geom.polarization_pairs
        pol_t = self.uav_geom.polarization_pairs
        co = np.array(
            [[p == q or pol_r == 1 or pol_t == 1 for q in range(pol_t)] for p in range(pol_r)]
        )
        if los:
            gamma = np.where(co, np.exp(2j * np.pi * rng.random((pol_r, pol_t))), 0.0)
            return gamma / np.linalg.norm(gamma)
        cross = 10.0 ** (-self.config.xpr_db / 10.0)
        power = np.where(co, 1.0, cross)
        draws = rng.standard_normal((pol_r, pol_t)) + 1j * rng.standard_normal((pol_r, pol_t))
        return draws * np.sqrt(power / 2.0) / np.sqrt(power.sum())

    def _grid_phase(
        self, path: PathParams, freqs: np.ndarray, times: np.ndarray
    ) -> np.ndarray:
        return np.exp(-2j * np.pi * freqs[:, None] * path.delay) * np.exp(
            2j * np.pi * path.doppler * times[None, :]
        )

    def uav_channel(
        self, uav_position: np.ndarray, rng: np.random.Generator, start_time: float
    ) -> tuple[np.ndarray, PathParams]:
        """K x S x r_x x t_x channel of one UAV."""
        cfg = self.config
        freqs = subcarrier_frequencies(cfg)
        times = symbol_times(cfg, start_time)
        los = self.los_path(uav_position)
        amplitude = abs(los.gain)

        def grid(path: PathParams, gamma: np.ndarray) -> np.ndarray:
            a_r = array_response(self.bs_geom, path.aoa_az, path.aoa_el, self.wavelength)
            a_t = array_response(self.uav_geom, path.aod_az, path.aod_el, self.wavelength)
            matrix = path.gain * polarized_component(gamma, a_r, a_t)
            return self._grid_phase(path, freqs, times)[:, :, None, None] * matrix

        los_unit = PathParams(
            los.gain / amplitude, los.delay, los.doppler,
            los.aoa_az, los.aoa_el, los.aod_az, los.aod_el,
        )
        los_grid = grid(los_unit, self._polarization_gains(rng, los=True))

        nlos_grids = []
        path_scale = np.sqrt(cfg.nlos_power / max(cfg.num_paths, 1))
        for _ in range(cfg.num_paths):
            path = PathParams(
                complex(path_scale),
                los.delay + float(rng.uniform(0.0, cfg.max_delay_s)),
                float(rng.uniform(-cfg.max_doppler_hz, cfg.max_doppler_hz)),
                float(rng.uniform(-np.pi, np.pi)),
                float(rng.uniform(0.0, np.pi / 2.0)),
                float(rng.uniform(-np.pi, np.pi)),
                float(rng.uniform(0.0, np.pi / 2.0)),
            )
            nlos_grids.append(grid(path, self._polarization_gains(rng, los=False)))

        return amplitude * rician_mix(los_grid, nlos_grids, cfg.rician_k), los

    def realize(self, scenario: Scenario, frame: int, seed: int) -> ChannelRealization:
        """Channel tensor of every UAV at one frame."""
        start_time = frame / scenario.config.frame_rate
        tensors, los_paths = [], []
        for uav in scenario.uavs:
            rng = substream(seed, "channel", frame, uav.index)
            tensor, los = self.uav_channel(uav.position, rng, start_time)
            tensors.append(tensor)
            los_paths.append(los)
        realization = ChannelRealization(
            np.stack(tensors),
            self.config.carrier_hz,
            self.config.subcarrier_spacing_hz,
            tuple(los_paths),
            frame,
        )
        logger.debug(
            "Channel realized",
            frame=frame,
            uavs=realization.num_uavs,
            shape=list(realization.tensor.shape),
        )
        return realization


def realize_channel(
    scenario: Scenario, cfg: ChannelConfig, frame: int, seed: int
) -> ChannelRealization:
    """Deterministic channel realization for (scenario, config, frame, seed)."""
    return ChannelService(cfg).realize(scenario, frame, seed)
