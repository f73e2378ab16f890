"""Trace-driven simulator for serverless mixture-of-experts serving."""

__version__ = "0.1.0"

from .cost_model import ClusterSpec, LoadVector, ModelSpec, ScalingPlan, layer_forward_time
from .kernels import BACKEND
from .placer import Placement, ReplicaRegistry, place_experts
from .predictor import PredictorProfile
from .scaler import ScalerConfig, scale_experts
from .simulator import SimConfig, run, run_comparison, sweep

__all__ = [
    "BACKEND", "ClusterSpec", "LoadVector", "ModelSpec", "Placement", "PredictorProfile",
    "ReplicaRegistry", "ScalerConfig", "ScalingPlan", "SimConfig", "layer_forward_time",
    "place_experts", "run", "run_comparison", "scale_experts", "sweep",
]
