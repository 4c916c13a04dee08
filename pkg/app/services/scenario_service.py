"""
Scenario service: synthetic traffic scene generation, rendering and persistence.
"""

from pathlib import Path

import numpy as np
import structlog

from app.core.exceptions import ArtifactFormatError, ConfigurationError, RangeError
from app.core.seeding import substream
from app.db import storage
from app.models import (
    BevGrid,
    BevSpec,
    CameraIntrinsics,
    DenseImage,
    Scenario,
    UavPose,
    VehicleTrack,
)
from app.schemas import ScenarioConfig
from app.services import geometry_service

logger = structlog.get_logger(__name__)

SCENARIO_SCHEMA = "scenario"
SCENARIO_SCHEMA_VERSION = 1

SKY_LEVEL = 220
MAX_PLACEMENT_ATTEMPTS = 500


class ScenarioService:
    """Builds reproducible scenes and the per-frame ground truth."""

    def __init__(self, config: ScenarioConfig):
        if min(config.area_extent) <= 0:
            raise ConfigurationError("scenario.area_extent must be positive")
        self.config = config
        self.bev = geometry_service.bev_spec_from_config(config.bev, config.area_extent)
        self.intrinsics = geometry_service.intrinsics_from_config(config.camera)

    def generate(self) -> Scenario:
        """Generate the scene described by the config."""
        cfg = self.config
        if cfg.num_vehicles < 1:
            raise ConfigurationError("scenario.num_vehicles must be at least 1")

        rng = substream(cfg.rng_seed, "scenario")
        uavs = self._place_uavs()
        if cfg.fixed_vehicles:
            tracks = self._fixed_tracks(rng)
        else:
            tracks = self._random_tracks(rng)
        texture_rng = substream(cfg.rng_seed, "texture")
        texture = self._texture(texture_rng)

        scenario = build_scenario(cfg, self.intrinsics, self.bev, uavs, tracks, texture)
        logger.info(
            "Scenario generated",
            seed=cfg.rng_seed,
            vehicles=len(tracks),
            uavs=len(uavs),
            frames=cfg.frames_per_sequence,
        )
        return scenario

    def _place_uavs(self) -> tuple[UavPose, ...]:
        cfg = self.config
        radius = cfg.uav_offset * np.sqrt(2.0)
        target = None if cfg.camera.aim == "nadir" else np.zeros(3)
        poses = []
        for u in range(cfg.num_uavs):
            angle = np.pi / 4.0 + 2.0 * np.pi * u / cfg.num_uavs
            position = np.array(
                [radius * np.cos(angle), radius * np.sin(angle), cfg.uav_altitude]
            )
            rotation = geometry_service.aim_rotation(position, target)
            poses.append(UavPose(u, position, rotation))
        return tuple(poses)

    def _min_gap(self) -> float:
        # keeps closed rasterizations of neighbouring vehicles disjoint
        return max(self.config.vehicle_gap, 1.5 * max(self.bev.delta_w, self.bev.delta_h))

    def _inside_area(self, track: VehicleTrack) -> bool:
        half_x, half_y = self.config.area_extent[0] / 2.0, self.config.area_extent[1] / 2.0
        for frame in range(self.config.frames_per_sequence):
            x_min, y_min, x_max, y_max = track.footprint(frame)
            if x_min < -half_x or x_max > half_x or y_min < -half_y or y_max > half_y:
                return False
        return True

    def _separated(self, track: VehicleTrack, placed: list[VehicleTrack]) -> bool:
        gap = self._min_gap()
        for other in placed:
            for frame in range(self.config.frames_per_sequence):
                ax0, ay0, ax1, ay1 = track.footprint(frame)
                bx0, by0, bx1, by1 = other.footprint(frame)
                separation = max(bx0 - ax1, ax0 - bx1, by0 - ay1, ay0 - by1)
                if separation < gap:
                    return False
        return True

    def _make_track(
        self,
        vehicle_id: int,
        start: np.ndarray,
        axis: str,
        speeds: tuple[float, float],
        change_frame: int,
        length: float,
        width: float,
        color: tuple[int, int, int],
    ) -> VehicleTrack:
        frames = self.config.frames_per_sequence
        dt = self.config.frame_interval
        direction = np.array([1.0, 0.0]) if axis == "x" else np.array([0.0, 1.0])
        velocities = np.array(
            [direction * (speeds[0] if t < change_frame else speeds[1]) for t in range(frames)]
        )
        centers = np.empty((frames, 2))
        centers[0] = start
        for t in range(1, frames):
            centers[t] = centers[t - 1] + velocities[t - 1] * dt
        return VehicleTrack(vehicle_id, centers, velocities, length, width, axis, color)

    def _random_color(self, rng: np.random.Generator) -> tuple[int, int, int]:
        return tuple(int(v) for v in rng.integers(30, 256, size=3))

    def _random_tracks(self, rng: np.random.Generator) -> tuple[VehicleTrack, ...]:
        cfg = self.config
        half = np.array(cfg.area_extent) / 2.0
        placed: list[VehicleTrack] = []
        for vehicle_id in range(1, cfg.num_vehicles + 1):
            for _ in range(MAX_PLACEMENT_ATTEMPTS):
                axis = "x" if rng.random() < 0.5 else "y"
                length = float(rng.uniform(*cfg.vehicle_length))
                width = float(rng.uniform(*cfg.vehicle_width))
                speeds = (
                    float(rng.uniform(-cfg.max_speed, cfg.max_speed)),
                    float(rng.uniform(-cfg.max_speed, cfg.max_speed)),
                )
                change_frame = int(rng.integers(1, cfg.frames_per_sequence + 1))
                start = rng.uniform(-half, half)
                color = self._random_color(rng)
                track = self._make_track(
                    vehicle_id, start, axis, speeds, change_frame, length, width, color
                )
                if self._inside_area(track) and self._separated(track, placed):
                    placed.append(track)
                    break
            else:
                raise ConfigurationError(
                    f"could not place vehicle {vehicle_id}: scenario area too crowded"
                )
        return tuple(placed)

    def _fixed_tracks(self, rng: np.random.Generator) -> tuple[VehicleTrack, ...]:
        placed: list[VehicleTrack] = []
        for vehicle_id, seed in enumerate(self.config.fixed_vehicles, start=1):
            track = self._make_track(
                vehicle_id,
                np.array(seed.center, dtype=float),
                seed.axis,
                (seed.speed, seed.speed),
                self.config.frames_per_sequence,
                seed.length,
                seed.width,
                self._random_color(rng),
            )
            if not self._inside_area(track):
                raise ConfigurationError(f"fixed vehicle {vehicle_id} leaves the area")
            if not self._separated(track, placed):
                raise ConfigurationError(f"fixed vehicle {vehicle_id} overlaps another")
            placed.append(track)
        return tuple(placed)

    def _texture(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        cells = np.ceil(np.array(cfg.area_extent) / cfg.texture_resolution).astype(int)
        return rng.integers(70, 131, size=tuple(cells)).astype(np.int64)


def build_scenario(
    config: ScenarioConfig,
    intrinsics: CameraIntrinsics,
    bev: BevSpec,
    uavs: tuple[UavPose, ...],
    tracks: tuple[VehicleTrack, ...],
    texture: np.ndarray,
) -> Scenario:
    """Assemble a scenario and rasterize its ground truth."""
    ground_truth = tuple(
        rasterize_ground_truth(tracks, frame, bev)
        for frame in range(config.frames_per_sequence)
    )
    return Scenario(config, intrinsics, bev, uavs, tracks, texture, ground_truth)


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Deterministic scenario for (config, seed)."""
    return ScenarioService(cfg).generate()


def rasterize_ground_truth(
    tracks: tuple[VehicleTrack, ...], frame: int, bev: BevSpec
) -> BevGrid:
    """Closed-footprint rasterization of every vehicle at one frame."""
    counts = np.zeros(bev.shape, dtype=np.int64)
    instances = {}
    for track in tracks:
        cells = geometry_service.footprint_cells(track.footprint(frame), bev)
        if cells is None:
            continue
        mask = np.zeros(bev.shape, dtype=bool)
        mask[cells] = True
        counts[cells] += 1
        instances[track.vehicle_id] = mask
    return BevGrid(bev, counts, instances)


def ground_points(scenario: Scenario, uav: UavPose) -> tuple[np.ndarray, ...]:
    """Cached ground hits of every pixel of one UAV camera."""
    key = ("ground", uav.index)
    if key not in scenario._ground_cache:
        scenario._ground_cache[key] = geometry_service.image_ground_points(
            scenario.intrinsics,
            uav.extrinsics,
            scenario.image_shape,
            scenario.config.bev.ground_plane_height,
        )
    return scenario._ground_cache[key]


def render_view(scenario: Scenario, uav: UavPose, frame: int) -> DenseImage:
    """Render the RGB-like view and instance ids seen by one UAV."""
    if not 0 <= frame < scenario.num_frames:
        raise RangeError(f"frame {frame} outside [0, {scenario.num_frames})")
    key = ("view", uav.index, frame)
    if key in scenario._ground_cache:
        return scenario._ground_cache[key]

    cfg = scenario.config
    x, y, valid = ground_points(scenario, uav)
    ids = np.zeros(x.shape, dtype=np.int32)
    for track in scenario.tracks:
        x_min, y_min, x_max, y_max = track.footprint(frame)
        hit = valid & (x >= x_min) & (x <= x_max) & (y >= y_min) & (y <= y_max)
        ids[hit] = track.vehicle_id

    texture = scenario.texture
    tx = np.floor((x + cfg.area_extent[0] / 2.0) / cfg.texture_resolution).astype(np.int64)
    ty = np.floor((y + cfg.area_extent[1] / 2.0) / cfg.texture_resolution).astype(np.int64)
    levels = texture[tx % texture.shape[0], ty % texture.shape[1]]
    levels = np.where(valid, levels, SKY_LEVEL)
    rgb = np.repeat(levels[:, :, None], cfg.camera.channels, axis=2)
    for track in scenario.tracks:
        color = np.resize(np.array(track.color), cfg.camera.channels)
        rgb[ids == track.vehicle_id] = color

    image = DenseImage(rgb.astype(np.float64) / 255.0, ids)
    scenario._ground_cache[key] = image
    return image


def save_scenario(scenario: Scenario, path: Path) -> Path:
    """Persist a scenario as a versioned, self-describing container."""
    tracks = scenario.tracks
    arrays = {
        "intrinsics": scenario.intrinsics.to_array(),
        "bev": scenario.bev.to_array(),
        "uav_positions": np.array([u.position for u in scenario.uavs]),
        "uav_rotations": np.array([u.rotation for u in scenario.uavs]),
        "track_ids": np.array([t.vehicle_id for t in tracks], dtype=np.int64),
        "track_centers": np.array([t.centers for t in tracks]),
        "track_velocities": np.array([t.velocities for t in tracks]),
        "track_sizes": np.array([[t.length, t.width] for t in tracks]),
        "track_axes": np.array([0 if t.axis == "x" else 1 for t in tracks], dtype=np.int64),
        "track_colors": np.array([t.color for t in tracks], dtype=np.int64),
        "texture": scenario.texture,
    }
    meta = {"config": scenario.config.model_dump(mode="json")}
    storage.write_npz(path, arrays, SCENARIO_SCHEMA, SCENARIO_SCHEMA_VERSION, meta)
    logger.info("Scenario saved", path=str(path))
    return path


def load_scenario(path: Path) -> Scenario:
    """Load a scenario written by :func:`save_scenario`."""
    arrays, meta = storage.read_npz(path, SCENARIO_SCHEMA, SCENARIO_SCHEMA_VERSION)
    try:
        config = ScenarioConfig.model_validate(meta["config"])
        intrinsics = CameraIntrinsics(*(float(v) for v in arrays["intrinsics"]))
        bev = BevSpec(*(float(v) for v in arrays["bev"]))
        uavs = tuple(
            UavPose(u, position, rotation)
            for u, (position, rotation) in enumerate(
                zip(arrays["uav_positions"], arrays["uav_rotations"], strict=True)
            )
        )
        tracks = tuple(
            VehicleTrack(
                int(vid),
                centers,
                velocities,
                float(size[0]),
                float(size[1]),
                "x" if axis == 0 else "y",
                tuple(int(c) for c in color),
            )
            for vid, centers, velocities, size, axis, color in zip(
                arrays["track_ids"],
                arrays["track_centers"],
                arrays["track_velocities"],
                arrays["track_sizes"],
                arrays["track_axes"],
                arrays["track_colors"],
                strict=True,
            )
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactFormatError(f"malformed scenario file {path}: {exc}") from exc
    return build_scenario(config, intrinsics, bev, uavs, tracks, arrays["texture"])
