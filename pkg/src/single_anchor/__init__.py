"""Planar tracking from a single UWB anchor.

A differential-drive robot is tracked with an EKF fed by ranges to one
anchor and a heading. When the robot drives straight, its speed is
recovered in closed form from three ranges and blended into the filter.
"""

__version__ = "0.1.0"

from .core import (
    AnchorPose,
    ConditioningError,
    EstimationError,
    EstimatorConfig,
    InvalidArgumentError,
    NoiseConfig,
    NoSolutionError,
    PoseTrack,
    RobotState,
    SingularGeometryError,
    StageProfile,
    wrap_angle,
)
from .pipeline import run_pipeline, run_pipeline_full
from .scenarios import paper_scenario_sim
from .speed import SpeedEstimator, solve_speed_general, solve_speed_uniform

__all__ = [
    "AnchorPose",
    "ConditioningError",
    "EstimationError",
    "EstimatorConfig",
    "InvalidArgumentError",
    "NoiseConfig",
    "NoSolutionError",
    "PoseTrack",
    "RobotState",
    "SingularGeometryError",
    "SpeedEstimator",
    "StageProfile",
    "paper_scenario_sim",
    "run_pipeline",
    "run_pipeline_full",
    "solve_speed_general",
    "solve_speed_uniform",
    "wrap_angle",
]
