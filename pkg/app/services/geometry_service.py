"""
Pinhole geometry, pixel lifting onto the ground plane, BEV rasterization and fusion.
"""

from collections.abc import Sequence

import numpy as np
import structlog
from scipy.spatial.transform import Rotation

from app.core import metrics
from app.core.exceptions import EmptySelectionError, ShapeMismatchError, SpecMismatchError
from app.models import (
    BevGrid,
    BevSpec,
    CameraExtrinsics,
    CameraIntrinsics,
    DenseImage,
    LiftResult,
)
from app.schemas import BevConfig, CameraConfig

logger = structlog.get_logger(__name__)

# camera x -> world +x, camera y -> world -y, boresight -> world -z
NADIR_ROTATION = np.diag([1.0, -1.0, -1.0])

_PARALLEL_TOLERANCE = 1e-12


def intrinsics_from_config(camera: CameraConfig) -> CameraIntrinsics:
    """Square-pixel intrinsics centred on the image unless a principal point is given."""
    if camera.principal_point is None:
        i_c = (camera.image_height - 1) / 2.0
        j_c = (camera.image_width - 1) / 2.0
    else:
        i_c, j_c = camera.principal_point
    return CameraIntrinsics(camera.focal_length_px, camera.focal_length_px, i_c, j_c)


def bev_spec_from_config(bev: BevConfig, area_extent: tuple[float, float]) -> BevSpec:
    """Resolve a BEV preset into explicit bounds centred on the scene."""
    if bev.preset == "custom":
        h_min, h_max, w_min, w_max = bev.extent
        return BevSpec(h_min, h_max, w_min, w_max, bev.resolution, bev.resolution)
    if bev.preset == "full":
        half_w, half_h = area_extent[0] / 2.0, area_extent[1] / 2.0
    else:
        half_w = half_h = 25.0 if bev.preset == "long" else 12.5
    return BevSpec(-half_h, half_h, -half_w, half_w, bev.resolution, bev.resolution)


def aim_rotation(position: np.ndarray, target: np.ndarray | None) -> np.ndarray:
    """Nadir camera frame tilted so the boresight passes through ``target``.

    Before tilting, the frame is turned about the vertical so image rows run along the
    horizontal line of sight; the long image axis then stays level across it.
    """
    if target is None:
        return NADIR_ROTATION.copy()
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    forward = target - position
    forward /= np.linalg.norm(forward)
    heading = np.arctan2(position[1] - target[1], position[0] - target[0])
    base = Rotation.from_euler("z", heading).as_matrix() @ NADIR_ROTATION
    boresight = base[:, 2]
    axis = np.cross(boresight, forward)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        return NADIR_ROTATION.copy()
    angle = np.arccos(np.clip(np.dot(boresight, forward), -1.0, 1.0))
    tilt = Rotation.from_rotvec(axis / norm * angle).as_matrix()
    return tilt @ base


def pixel_to_ray(intr: CameraIntrinsics, pixel: tuple[float, float]) -> np.ndarray:
    """Camera ray (X_c/Z_c, Y_c/Z_c, 1) through a pixel."""
    i, j = pixel
    return np.array([(i - intr.i_c) / intr.f_x, (j - intr.j_c) / intr.f_y, 1.0])


def ray_to_pixel(intr: CameraIntrinsics, ray: np.ndarray) -> tuple[float, float]:
    """Project a camera-frame point back to pixel coordinates."""
    projected = intr.matrix @ (np.asarray(ray, dtype=float) / ray[2])
    return float(projected[0]), float(projected[1])


def camera_to_lidar(extr: CameraExtrinsics, p_cam: np.ndarray) -> np.ndarray:
    """R_E p + T_E."""
    return extr.rotation @ np.asarray(p_cam, dtype=float) + extr.translation


def intersect_ground(
    intr: CameraIntrinsics,
    extr: CameraExtrinsics,
    i: np.ndarray,
    j: np.ndarray,
    ground_plane_height: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ground-plane hit (x, y) for pixel coordinates plus a validity mask.

    Works elementwise so scalar and whole-image lifting produce identical
    floating-point results.
    """
    rx = (np.asarray(i, dtype=float) - intr.i_c) / intr.f_x
    ry = (np.asarray(j, dtype=float) - intr.j_c) / intr.f_y
    rot = extr.rotation
    dx = rot[0, 0] * rx + rot[0, 1] * ry + rot[0, 2]
    dy = rot[1, 0] * rx + rot[1, 1] * ry + rot[1, 2]
    dz = rot[2, 0] * rx + rot[2, 1] * ry + rot[2, 2]
    height = ground_plane_height - extr.translation[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = height / dz
    valid = (np.abs(dz) > _PARALLEL_TOLERANCE) & np.isfinite(t) & (t > 0)
    t = np.where(valid, t, 0.0)
    x = extr.translation[0] + t * dx
    y = extr.translation[1] + t * dy
    return x, y, valid


def cell_indices(
    x: np.ndarray, y: np.ndarray, bev: BevSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Floor-formula cell indices and an in-grid mask."""
    w = np.floor((np.asarray(x) - bev.w_min) / bev.delta_w)
    h = np.floor((np.asarray(y) - bev.h_min) / bev.delta_h)
    inside = (w >= 0) & (w < bev.w_cells) & (h >= 0) & (h < bev.h_cells)
    return w.astype(np.int64), h.astype(np.int64), inside


def lift_pixel_to_bev(
    intr: CameraIntrinsics,
    extr: CameraExtrinsics,
    pixel: tuple[float, float],
    ground_plane_height: float,
    bev: BevSpec,
) -> LiftResult:
    """BEV cell hit by the ray through ``pixel``; degenerate rays are flagged."""
    x, y, valid = intersect_ground(intr, extr, pixel[0], pixel[1], ground_plane_height)
    if not bool(valid):
        return LiftResult(None, degenerate=True)
    w, h, inside = cell_indices(x, y, bev)
    if not bool(inside):
        return LiftResult(None)
    return LiftResult((int(w), int(h)))


def image_ground_points(
    intr: CameraIntrinsics,
    extr: CameraExtrinsics,
    shape: tuple[int, int],
    ground_plane_height: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ground hits for every pixel centre of an X x Y image."""
    i, j = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    return intersect_ground(intr, extr, i, j, ground_plane_height)


def footprint_cells(
    footprint: tuple[float, float, float, float], bev: BevSpec
) -> tuple[slice, slice] | None:
    """Closed index range covered by a rectangle, clipped to the grid."""
    x_min, y_min, x_max, y_max = footprint
    w_lo, h_lo, _ = cell_indices(x_min, y_min, bev)
    w_hi, h_hi, _ = cell_indices(x_max, y_max, bev)
    w_lo, w_hi = max(int(w_lo), 0), min(int(w_hi), bev.w_cells - 1)
    h_lo, h_hi = max(int(h_lo), 0), min(int(h_hi), bev.h_cells - 1)
    if w_lo > w_hi or h_lo > h_hi:
        return None
    return slice(w_lo, w_hi + 1), slice(h_lo, h_hi + 1)


def project_view_to_bev(
    image: DenseImage,
    intr: CameraIntrinsics,
    extr: CameraExtrinsics,
    bev: BevSpec,
    ground_plane_height: float = 0.0,
) -> BevGrid:
    """Lift every foreground pixel and record its id in the landing cell."""
    if image.instance_ids is None:
        raise ShapeMismatchError("projection requires an image with an instance-id map")
    return project_ids_to_bev(image.instance_ids, intr, extr, bev, ground_plane_height)


def project_ids_to_bev(
    ids: np.ndarray,
    intr: CameraIntrinsics,
    extr: CameraExtrinsics,
    bev: BevSpec,
    ground_plane_height: float = 0.0,
) -> BevGrid:
    """Projection of an X x Y instance-id map; id 0 is background."""
    fg_i, fg_j = np.nonzero(ids > 0)
    x, y, valid = intersect_ground(intr, extr, fg_i, fg_j, ground_plane_height)
    degenerate = int((~valid).sum())
    w, h, inside = cell_indices(x, y, bev)
    keep = valid & inside
    w, h, labels = w[keep], h[keep], ids[fg_i[keep], fg_j[keep]]

    counts = np.zeros(bev.shape, dtype=np.int64)
    np.add.at(counts, (w, h), 1)
    instances = {}
    for instance_id in np.unique(labels):
        mask = np.zeros(bev.shape, dtype=bool)
        selected = labels == instance_id
        mask[w[selected], h[selected]] = True
        instances[int(instance_id)] = mask

    if degenerate:
        metrics.DEGENERATE_PIXELS.inc(degenerate)
        logger.debug("Skipped degenerate pixels", count=degenerate)
    return BevGrid(bev, counts, instances, degenerate)


def fuse_bev(grids: Sequence[BevGrid]) -> BevGrid:
    """Element-wise summation of counts and union of instance ids."""
    if not grids:
        raise EmptySelectionError("fuse_bev needs at least one grid")
    spec = grids[0].spec
    counts = np.zeros(spec.shape, dtype=np.int64)
    instances: dict[int, np.ndarray] = {}
    degenerate = 0
    for grid in grids:
        if grid.spec != spec:
            raise SpecMismatchError("cannot fuse BEV grids with different specs")
        counts += grid.counts
        degenerate += grid.degenerate_pixels
        for instance_id, mask in grid.instances.items():
            if instance_id in instances:
                instances[instance_id] = instances[instance_id] | mask
            else:
                instances[instance_id] = mask.copy()
    return BevGrid(spec, counts, dict(sorted(instances.items())), degenerate)
