"""Selective, density-weighted point-to-plane ICP localization in deviating building models."""

from ._core import (
    BimlocError,
    ExperimentConfig,
    RigidTransform,
    all_methods,
    covariance_summary,
    localize,
    pose_delta,
    run_matrix,
    se3_exp,
    simulate_scan,
    weights_binary,
    weights_linear,
)

__all__ = [
    "BimlocError",
    "ExperimentConfig",
    "RigidTransform",
    "all_methods",
    "covariance_summary",
    "localize",
    "pose_delta",
    "run_matrix",
    "se3_exp",
    "simulate_scan",
    "weights_binary",
    "weights_linear",
]
