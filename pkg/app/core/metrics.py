"""
Prometheus instrumentation for simulator runs.
Counters live in a private registry that each command dumps into its run directory.
"""

from pathlib import Path

import prometheus_client
from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

prometheus_client.disable_created_metrics()

REGISTRY = CollectorRegistry()

ENV_STEPS = Counter(
    "sim_env_steps_total", "Environment steps executed", registry=REGISTRY
)
PERCEPTION_EVALUATIONS = Counter(
    "sim_perception_evaluations_total",
    "Proxy perception evaluations",
    registry=REGISTRY,
)
DEGENERATE_PIXELS = Counter(
    "sim_degenerate_pixels_total",
    "Pixels skipped because their ray never meets the ground plane",
    registry=REGISTRY,
)
RECONSTRUCTION_FALLBACKS = Counter(
    "sim_reconstruction_fallback_pixels_total",
    "Pixels filled with the global mean during sparse reconstruction",
    registry=REGISTRY,
)
PRECODER_CANDIDATES = Counter(
    "sim_precoder_candidates_total",
    "Precoder combinations evaluated by codebook search",
    registry=REGISTRY,
)
PREDICTOR_EVALUATIONS = Counter(
    "sim_diffusion_predictor_evaluations_total",
    "Denoiser network evaluations during generation",
    ["sampler"],
    registry=REGISTRY,
)
STEP_LATENCY = Histogram(
    "sim_step_latency_seconds",
    "Simulated maximum uplink latency per environment step",
    buckets=(0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0),
    registry=REGISTRY,
)


def export_metrics(path: Path) -> None:
    """Write the registry in text exposition format."""
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
