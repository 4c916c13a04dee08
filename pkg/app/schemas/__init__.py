"""
Pydantic schemas for run configuration and ledger rows.
Run configs reject unknown keys so a misspelled physics parameter fails loudly.
"""

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    """Frozen model that rejects unknown fields."""

    model_config = ConfigDict(extra="forbid", frozen=True)


# Scenario Schemas
class VehicleSeed(StrictModel):
    """Explicit vehicle placement used instead of random sampling."""

    center: tuple[float, float]
    length: float = Field(4.5, gt=0)
    width: float = Field(2.0, gt=0)
    axis: Literal["x", "y"] = "x"
    speed: float = 0.0


class CameraConfig(StrictModel):
    """Pinhole camera shared by all UAVs."""

    image_height: int = Field(56, ge=1, description="X, image rows")
    image_width: int = Field(120, ge=1, description="Y, image columns")
    channels: int = Field(3, ge=1)
    focal_length_px: float = Field(100.0, gt=0)
    principal_point: tuple[float, float] | None = None
    aim: Literal["center", "nadir"] = "center"


class BevConfig(StrictModel):
    """Bird's-eye-view grid placement and resolution."""

    preset: Literal["full", "long", "short", "custom"] = "full"
    resolution: float = Field(0.5, gt=0, description="meters per cell on both axes")
    extent: tuple[float, float, float, float] | None = Field(
        None, description="(h_min, h_max, w_min, w_max) for the custom preset"
    )
    ground_plane_height: float = 0.0

    @model_validator(mode="after")
    def check_extent(self) -> "BevConfig":
        if self.preset == "custom" and self.extent is None:
            raise ValueError("bev.extent is required when bev.preset = 'custom'")
        return self


class ScenarioConfig(StrictModel):
    """Synthetic traffic scene definition."""

    area_extent: tuple[float, float] = (100.0, 100.0)
    num_uavs: int = Field(4, ge=1)
    uav_altitude: float = Field(50.0, gt=0)
    uav_offset: float = Field(
        25.0, ge=0, description="per-axis offset of the UAV ring from the scene centre"
    )
    num_vehicles: int = Field(16, ge=0)
    max_speed: float = Field(3.0, ge=0)
    vehicle_length: tuple[float, float] = (4.0, 5.0)
    vehicle_width: tuple[float, float] = (1.8, 2.2)
    vehicle_gap: float = Field(1.0, ge=0)
    fixed_vehicles: tuple[VehicleSeed, ...] = ()
    frame_rate: float = Field(2.0, gt=0)
    frames_per_sequence: int = Field(7, ge=1)
    input_frames: int = Field(3, ge=1)
    texture_resolution: float = Field(0.25, gt=0)
    rng_seed: int = Field(0, ge=0, lt=2**64)
    camera: CameraConfig = CameraConfig()
    bev: BevConfig = BevConfig()

    @model_validator(mode="after")
    def check_layout(self) -> "ScenarioConfig":
        if min(self.area_extent) <= 0:
            raise ValueError("scenario.area_extent must be positive on both axes")
        if self.input_frames > self.frames_per_sequence:
            raise ValueError("scenario.input_frames must not exceed frames_per_sequence")
        if self.fixed_vehicles and len(self.fixed_vehicles) != self.num_vehicles:
            raise ValueError("scenario.num_vehicles must equal len(fixed_vehicles)")
        return self

    @property
    def frame_interval(self) -> float:
        return 1.0 / self.frame_rate


# Channel Schemas
class ArrayConfig(StrictModel):
    """Uniform planar array layout."""

    n_x: int = Field(ge=1)
    n_y: int = Field(ge=1)
    spacing_wavelengths: float = Field(0.5, gt=0)
    polarization_pairs: Literal[1, 2] = 2


class ChannelConfig(StrictModel):
    """Wideband geometric channel parameters."""

    carrier_hz: float = Field(3.5e9, gt=0)
    num_subcarriers: int = Field(72, ge=1)
    subcarrier_spacing_hz: float = Field(15e3, gt=0)
    num_symbols: int = Field(2, ge=1)
    cyclic_prefix_fraction: float = Field(0.07, ge=0)
    num_paths: int = Field(8, ge=0)
    rician_k: float = Field(8.0, ge=0)
    nlos_power: float = Field(1.0, gt=0)
    max_delay_s: float = Field(1e-6, ge=0)
    max_doppler_hz: float = Field(50.0, ge=0)
    los_doppler_hz: float = 0.0
    xpr_db: float = 8.0
    path_loss_exponent: float = Field(2.0, ge=0)
    reference_distance: float = Field(100.0, gt=0)
    snr_db: float = Field(-10.0, description="receive SNR at the reference distance")
    bs_position: tuple[float, float, float] = (0.0, -70.0, 25.0)
    bs_boresight_azimuth_deg: float = 90.0
    uav_array: ArrayConfig = ArrayConfig(n_x=2, n_y=1)
    bs_array: ArrayConfig = ArrayConfig(n_x=2, n_y=2)

    @property
    def wavelength(self) -> float:
        return 299_792_458.0 / self.carrier_hz


class LinkConfig(StrictModel):
    """Codebook and uplink receiver settings."""

    oversampling_x: int = Field(4, ge=1)
    oversampling_y: int = Field(4, ge=1)
    tx_power_w: float = Field(0.2, gt=0)
    search_mode: Literal["greedy", "joint", "auto"] = "auto"
    label_objective: Literal["per_uav_rate", "sum_reward"] = "per_uav_rate"
    max_sweeps: int = Field(5, ge=1)
    joint_limit: int = Field(4096, ge=1)


class KappaConfig(StrictModel):
    """Discrete Top-K ratio grid."""

    kappa_min: float = Field(0.05, gt=0, le=1)
    step: float = Field(0.1, gt=0)
    count: int = Field(5, ge=1)

    @model_validator(mode="after")
    def check_range(self) -> "KappaConfig":
        top = self.kappa_min + (self.count - 1) * self.step
        if top > 1.0 + 1e-12:
            raise ValueError(f"kappa grid exceeds 1 (largest value {top:.4f})")
        return self


class ObjectiveConfig(StrictModel):
    """Reward weights and payload accounting."""

    alpha: float = Field(0.5, ge=0, le=1)
    latency_weight: float = Field(0.1, ge=0, description="lambda")
    bits_per_pixel: int = Field(8, ge=1, le=32)
    reconstruction_sigma: float = Field(1.0, gt=0)
    reward_floor: float = -10.0


# Policy Schemas
class DiffusionConfig(StrictModel):
    """Noise schedule and denoiser network."""

    total_steps: int = Field(100, ge=1)
    ddim_steps: int = Field(10, ge=1)
    beta_start: float = Field(1e-4, gt=0, lt=1)
    beta_end: float = Field(2e-2, gt=0, lt=1)
    hidden_width: int = Field(64, ge=1)
    time_embedding_dim: int = Field(16, ge=2)
    learning_rate: float = Field(5e-3, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    updates_per_step: int = Field(4, ge=1)

    @model_validator(mode="after")
    def check_schedule(self) -> "DiffusionConfig":
        if self.ddim_steps > self.total_steps:
            raise ValueError("diffusion.ddim_steps must not exceed total_steps")
        if self.beta_end < self.beta_start:
            raise ValueError("diffusion.beta_end must be >= beta_start")
        return self


class PolicyConfig(StrictModel):
    """Q-network and training loop."""

    hidden_width: int = Field(64, ge=1)
    learning_rate: float = Field(1e-2, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    epochs: int = Field(250, ge=1)
    epsilon_start: float = Field(1.0, ge=0, le=1)
    epsilon_end: float = Field(0.05, ge=0, le=1)
    epsilon_decay_fraction: float = Field(0.6, gt=0, le=1)
    use_search_labels: bool = True


class SimulateConfig(StrictModel):
    """Fixed action evaluated by the simulate command."""

    selection: tuple[int, ...] | None = None
    kappa_index: int = Field(0, ge=0)


class SweepConfig(StrictModel):
    """Sweep axes and their default points."""

    kappa_points: tuple[float, ...] = (0.05, 0.1, 0.15, 0.25, 0.5)
    lambda_points: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    uav_counts: tuple[int, ...] = (1, 2, 4)
    fixed_kappa: float = Field(0.25, gt=0, le=1)
    lambda_solver: Literal["oracle", "policy"] = "oracle"


class ReportConfig(StrictModel):
    """Communication-cost comparison against a feature-sharing baseline."""

    reference_costs: tuple[float, float] | None = (9.22e6, 6.14e7)
    feature_channels: int = Field(64, ge=1)
    feature_size: tuple[int, int] = (200, 200)
    feature_bits: int = Field(16, ge=1)
    feature_ratio: float = Field(0.25, gt=0, le=1)


class RunConfig(StrictModel):
    """Complete, validated run configuration."""

    seed: int = Field(7, ge=0, lt=2**63)
    output_dir: str | None = None
    num_sequences: int = Field(4, ge=1)
    scenario: ScenarioConfig = ScenarioConfig()
    channel: ChannelConfig = ChannelConfig()
    link: LinkConfig = LinkConfig()
    kappa: KappaConfig = KappaConfig()
    objective: ObjectiveConfig = ObjectiveConfig()
    diffusion: DiffusionConfig = DiffusionConfig()
    policy: PolicyConfig = PolicyConfig()
    simulate: SimulateConfig = SimulateConfig()
    sweep: SweepConfig = SweepConfig()
    report: ReportConfig = ReportConfig()

    @model_validator(mode="after")
    def check_cross_module(self) -> "RunConfig":
        if self.channel.uav_array.polarization_pairs != 2:
            raise ValueError("channel.uav_array must be dual-polarized for Type-I precoders")
        if self.simulate.kappa_index >= self.kappa.count:
            raise ValueError("simulate.kappa_index is outside the kappa grid")
        if self.simulate.selection is not None:
            if not self.simulate.selection:
                raise ValueError("simulate.selection must name at least one UAV")
            if any(u < 0 or u >= self.scenario.num_uavs for u in self.simulate.selection):
                raise ValueError("simulate.selection names a UAV that does not exist")
        if any(n < 1 or n > self.scenario.num_uavs for n in self.sweep.uav_counts):
            raise ValueError("sweep.uav_counts must lie in [1, num_uavs]")
        if any(not 0 < k <= 1 for k in self.sweep.kappa_points):
            raise ValueError("sweep.kappa_points must lie in (0, 1]")
        return self

    def with_overrides(
        self, seed: int | None = None, output_dir: str | None = None
    ) -> "RunConfig":
        """Apply CLI flag overrides."""
        update: dict = {}
        if seed is not None:
            update["seed"] = seed
        if output_dir is not None:
            update["output_dir"] = output_dir
        return self.model_copy(update=update) if update else self

    def scenario_for(self, sequence: int) -> ScenarioConfig:
        """Scenario config of one sequence, seeded from the root seed."""
        seed = int(self.seed) * 1_000_003 + sequence
        return self.scenario.model_copy(update={"rng_seed": seed % 2**64})


# Ledger Schemas
class StepRecord(BaseModel):
    """One environment step."""

    sequence: int
    frame: int
    selection: str
    kappa: str
    precoders: str
    rates_bps: str
    latency_max_s: float
    utility_iou: float
    utility_pq: float
    reward: float


class FrameMetricRecord(BaseModel):
    """Per-frame perception metrics."""

    sequence: int
    frame: int
    iou: float
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int


class CurveRecord(BaseModel):
    """Per-epoch training curve point."""

    epoch: int
    reward: float
    latency: float
    q_loss: float
    diffusion_loss: float


class SweepRecord(BaseModel):
    """One aggregated sweep point."""

    axis: str
    value: float
    mean_iou: float
    mean_pq: float
    mean_latency_s: float = math.nan
    mean_reward: float = math.nan
    mean_sinr_db: float = math.nan
    min_rate_bps: float = math.nan
    total_rate_bps: float = math.nan
    payload_bits: float = math.nan
    crossing: bool = False
