"""Noticeability of user-avatar arm pose offsets.

Fit per-pose probability curves from yes/no trial data, query the noticing
probability of shoulder and elbow offsets, find the offsets that stay below a
target probability, and amplify streaming arm motion within that budget.
"""

from .amplification import AmplifierConfig, PoseFrame, amplify_frame, amplify_trajectory, configure
from .dataset import NoticeabilityDataset, read_trials, write_trials
from .fitting import NoticeabilityModel, fit_model
from .offset_model import applicable_set, composite_probability
from .pose_geometry import ArmPose, CompositeOffset, JointOffset2D, LimbLengths, apply_offset, forward_kinematics

__version__ = "0.1.0"

__all__ = [
    "AmplifierConfig", "ArmPose", "CompositeOffset", "JointOffset2D", "LimbLengths", "NoticeabilityDataset",
    "NoticeabilityModel", "PoseFrame", "amplify_frame", "amplify_trajectory", "applicable_set", "apply_offset",
    "composite_probability", "configure", "fit_model", "forward_kinematics", "read_trials", "write_trials",
]
