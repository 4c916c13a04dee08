"""
BEV perception metrics (IoU, panoptic quality) and the geometric proxy perceiver.
"""

from collections.abc import Mapping, Sequence

import numpy as np
import structlog
from scipy import ndimage

from app.core import metrics
from app.core.exceptions import EmptySelectionError, RangeError, SpecMismatchError
from app.models import (
    BevGrid,
    FrameMetrics,
    LabeledBev,
    MatchResult,
    PanopticResult,
    Scenario,
    SparseImage,
)
from app.services import geometry_service, scenario_service

logger = structlog.get_logger(__name__)

MATCH_THRESHOLD = 0.5


def _require_same_spec(pred: LabeledBev, gt: LabeledBev) -> None:
    if pred.spec != gt.spec:
        raise SpecMismatchError("prediction and ground truth use different BEV specs")


def ground_truth_labels(grid: BevGrid) -> LabeledBev:
    """Ground-truth instances; a cell claimed twice goes to the smaller id."""
    claimed = np.zeros(grid.spec.shape, dtype=bool)
    instances = {}
    for instance_id in sorted(grid.instances):
        mask = grid.instances[instance_id] & ~claimed
        claimed |= mask
        if mask.any():
            instances[instance_id] = np.flatnonzero(mask)
    return LabeledBev.from_instances(grid.spec, instances)


def labeled_from_grid(grid: BevGrid) -> LabeledBev:
    """Occupied cells split into 4-connected components.

    Component labels become prediction ids; ``source_ids`` records the
    majority projected instance id of each component (ties to the smaller id).
    """
    occupied = grid.occupied
    components, count = ndimage.label(occupied)
    flat = components.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(1, count + 2))
    instances = {
        label: order[bounds[label - 1] : bounds[label]] for label in range(1, count + 1)
    }

    ids = sorted(grid.instances)
    source_ids = {}
    if ids:
        votes = np.stack(
            [np.bincount(components[grid.instances[i]], minlength=count + 1) for i in ids],
            axis=1,
        )
        for label in range(1, count + 1):
            if votes[label].any():
                source_ids[label] = ids[int(np.argmax(votes[label]))]
    return LabeledBev(grid.spec, occupied, instances, source_ids)


def iou_semantic(pred: LabeledBev, gt: LabeledBev) -> float:
    """Cell-level |pred & gt| / |pred | gt|; two empty masks score 1."""
    _require_same_spec(pred, gt)
    union = int(np.count_nonzero(pred.semantic | gt.semantic))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(pred.semantic & gt.semantic)) / union


def mean_iou_over_frames(ious: Sequence[float]) -> float:
    if len(ious) == 0:
        raise RangeError("mean IoU needs at least one frame")
    return float(np.mean(np.asarray(ious, dtype=float)))


def _label_map(bev: LabeledBev) -> np.ndarray:
    labels = np.zeros(bev.spec.shape[0] * bev.spec.shape[1], dtype=np.int64)
    for instance_id, cells in bev.instances.items():
        labels[cells] = instance_id
    return labels


def pairwise_iou(pred: LabeledBev, gt: LabeledBev) -> dict[tuple[int, int], float]:
    """IoU of every overlapping (pred id, gt id) pair."""
    _require_same_spec(pred, gt)
    pred_labels, gt_labels = _label_map(pred), _label_map(gt)
    both = (pred_labels > 0) & (gt_labels > 0)
    if not both.any():
        return {}
    pairs, overlap = np.unique(
        np.stack([pred_labels[both], gt_labels[both]]), axis=1, return_counts=True
    )
    result = {}
    for (p, g), inter in zip(pairs.T, overlap, strict=True):
        size_p = pred.instances[int(p)].size
        size_g = gt.instances[int(g)].size
        result[(int(p), int(g))] = int(inter) / (size_p + size_g - int(inter))
    return result


def match_instances(pred: LabeledBev, gt: LabeledBev) -> MatchResult:
    """Greedy matching on descending IoU above 0.5 (unique at that threshold)."""
    candidates = sorted(
        ((-iou, p, g) for (p, g), iou in pairwise_iou(pred, gt).items() if iou > MATCH_THRESHOLD)
    )
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    tp = []
    for neg_iou, p, g in candidates:
        if p in used_pred or g in used_gt:
            continue
        used_pred.add(p)
        used_gt.add(g)
        tp.append((p, g, -neg_iou))
    fp = tuple(sorted(set(pred.instances) - used_pred))
    fn = tuple(sorted(set(gt.instances) - used_gt))
    return MatchResult(tuple(sorted(tp)), fp, fn)


def panoptic_quality(match: MatchResult) -> PanopticResult:
    """PQ = SQ * RQ; with nothing to match PQ is 0 and the result is flagged empty."""
    tp, fp, fn = len(match.tp), len(match.fp), len(match.fn)
    if tp + fp + fn == 0:
        return PanopticResult(0.0, 0.0, 0.0, 0, 0, 0, empty=True)
    sq = sum(iou for _, _, iou in match.tp) / tp if tp else 0.0
    rq = tp / (tp + 0.5 * fp + 0.5 * fn)
    return PanopticResult(sq * rq, sq, rq, tp, fp, fn)


def mean_panoptic_over_frames(results: Sequence[PanopticResult]) -> float:
    if len(results) == 0:
        raise RangeError("mean PQ needs at least one frame")
    return float(np.mean([r.pq for r in results]))


def evaluate_frame(pred: LabeledBev, gt: LabeledBev, frame: int) -> FrameMetrics:
    return FrameMetrics(frame, iou_semantic(pred, gt), panoptic_quality(match_instances(pred, gt)))


def proxy_perceive(
    scenario: Scenario,
    frame: int,
    selected: Sequence[int],
    sparse: Mapping[int, SparseImage],
) -> LabeledBev:
    """Lift the foreground pixels that survived Top-K and fuse the selected views.

    A cell is predicted vehicle when its fused count is at least one.
    """
    if len(selected) == 0:
        raise EmptySelectionError("proxy perception needs at least one selected UAV")
    grids = []
    for u in selected:
        uav = scenario.uavs[u]
        image = sparse[u]
        ids = image.instance_ids
        if ids is None:
            view = scenario_service.render_view(scenario, uav, frame)
            ids = np.where(image.mask, view.instance_ids, 0)
        grids.append(
            geometry_service.project_ids_to_bev(
                ids,
                scenario.intrinsics,
                uav.extrinsics,
                scenario.bev,
                scenario.config.bev.ground_plane_height,
            )
        )
    prediction = labeled_from_grid(geometry_service.fuse_bev(grids))
    metrics.PERCEPTION_EVALUATIONS.inc()
    logger.debug(
        "Proxy perception",
        frame=frame,
        uavs=list(selected),
        instances=len(prediction.instances),
    )
    return prediction
