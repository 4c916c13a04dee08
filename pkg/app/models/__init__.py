"""
Domain models for the simulator.
Immutable dataclasses shared by the service layer.
"""

from app.models.decision import JointAction, KappaGrid, StepOutcome
from app.models.geometry import (
    BevGrid,
    BevSpec,
    CameraExtrinsics,
    CameraIntrinsics,
    LiftResult,
)
from app.models.imaging import ImportanceMap, Reconstruction, SparseImage
from app.models.perception import FrameMetrics, LabeledBev, MatchResult, PanopticResult
from app.models.radio import (
    ArrayGeometry,
    ChannelRealization,
    LinkState,
    PathParams,
    PrecoderCodebook,
    RateResult,
    SearchResult,
)
from app.models.scene import DenseImage, Scenario, UavPose, VehicleTrack

__all__ = [
    "ArrayGeometry",
    "BevGrid",
    "BevSpec",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "ChannelRealization",
    "DenseImage",
    "FrameMetrics",
    "ImportanceMap",
    "JointAction",
    "KappaGrid",
    "LabeledBev",
    "LiftResult",
    "LinkState",
    "MatchResult",
    "PanopticResult",
    "PathParams",
    "PrecoderCodebook",
    "RateResult",
    "Reconstruction",
    "Scenario",
    "SearchResult",
    "SparseImage",
    "StepOutcome",
    "UavPose",
    "VehicleTrack",
]
