"""
Scenario domain types: vehicle tracks, UAV poses, rendered images.
"""

from dataclasses import dataclass, field

import numpy as np

from app.models.geometry import BevGrid, BevSpec, CameraExtrinsics, CameraIntrinsics
from app.schemas import ScenarioConfig


@dataclass(frozen=True, eq=False)
class VehicleTrack:
    """Axis-aligned vehicle moving with piecewise-constant velocity.

    ``velocities[t]`` carries the vehicle from frame ``t`` to ``t + 1``.
    """

    vehicle_id: int
    centers: np.ndarray
    velocities: np.ndarray
    length: float
    width: float
    axis: str
    color: tuple[int, int, int]

    @property
    def half_extents(self) -> tuple[float, float]:
        if self.axis == "x":
            return self.length / 2.0, self.width / 2.0
        return self.width / 2.0, self.length / 2.0

    def footprint(self, frame: int) -> tuple[float, float, float, float]:
        """Closed rectangle (x_min, y_min, x_max, y_max) at a frame."""
        half_x, half_y = self.half_extents
        cx, cy = self.centers[frame]
        return (cx - half_x, cy - half_y, cx + half_x, cy + half_y)


@dataclass(frozen=True, eq=False)
class UavPose:
    """Hovering UAV with a rigidly mounted camera."""

    index: int
    position: np.ndarray
    rotation: np.ndarray

    @property
    def extrinsics(self) -> CameraExtrinsics:
        return CameraExtrinsics(self.rotation, self.position)


@dataclass(frozen=True, eq=False)
class DenseImage:
    """X x Y x C pixel values in [0, 1] with an optional instance-id map."""

    pixels: np.ndarray
    instance_ids: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        x, y, c = self.pixels.shape
        return (x, y, c)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable synthetic scene with per-frame ground truth."""

    config: ScenarioConfig
    intrinsics: CameraIntrinsics
    bev: BevSpec
    uavs: tuple[UavPose, ...]
    tracks: tuple[VehicleTrack, ...]
    texture: np.ndarray
    ground_truth: tuple[BevGrid, ...]
    _ground_cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_frames(self) -> int:
        return self.config.frames_per_sequence

    @property
    def image_shape(self) -> tuple[int, int]:
        camera = self.config.camera
        return (camera.image_height, camera.image_width)

    @property
    def observation_frame(self) -> int:
        """Last input frame; the proxy perceiver observes only this frame."""
        return self.config.input_frames - 1

    @property
    def prediction_frames(self) -> tuple[int, ...]:
        frames = tuple(range(self.config.input_frames, self.num_frames))
        return frames or (self.observation_frame,)
