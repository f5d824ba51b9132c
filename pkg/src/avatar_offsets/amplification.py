"""Dynamic movement amplification of streaming arm poses.

Offsets grow linearly with the fraction of the way the user has moved
towards a configured extreme pose, reaching a maximum offset at the extreme
whose noticing probability is bounded by the configured level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .errors import DataError
from .fitting import NoticeabilityModel
from .offset_model import COMBINERS, combined_baseline, max_offset_along_direction
from .pose_geometry import (
    ArmPose, CompositeOffset, JointOffset2D, LimbLengths, apply_offset, forward_kinematics,
    rula_arm_score, wrap_phi,
)

RATIO_LIMIT = 1.5
TRAJECTORY_HEADER = ["t", "phi_s", "theta_s", "phi_e", "theta_e"]
AMPLIFIED_HEADER = TRAJECTORY_HEADER + [
    "off_phi_s", "off_theta_s", "off_phi_e", "off_theta_e",
    "v_phi_s", "v_theta_s", "v_phi_e", "v_theta_e",
]


class ConfigurationError(ValueError):
    """The amplifier cannot be configured with the given extreme pose or parameters."""


@dataclass(frozen=True)
class PoseFrame:
    t: float
    pose: ArmPose


@dataclass(frozen=True)
class AmplifiedFrame:
    t: float
    physical: ArmPose
    applied: CompositeOffset
    virtual: ArmPose


@dataclass(frozen=True)
class AmplifierConfig:
    """Immutable amplifier state.

    ``shoulder_max`` is the level-p shoulder boundary point along the
    extreme shoulder direction. ``elbow_max`` is the level-p elbow boundary
    point along the extreme elbow direction, measured in elbow-offset
    coordinates after the shift caused by the shoulder offset applied at the
    extreme pose.
    """

    extreme_pose: ArmPose
    max_probability: float
    delta_s: float
    model: NoticeabilityModel
    combiner: str
    shoulder_max: JointOffset2D
    elbow_max: JointOffset2D

    @property
    def delta_e(self) -> float:
        return 1.0 - self.delta_s

    def slopes(self) -> np.ndarray:
        """Offset degrees per pose degree on each of the four axes, before clamping."""
        ext = self.extreme_pose.as_tuple()
        coef = (self.delta_s * self.shoulder_max.d_phi, self.delta_s * self.shoulder_max.d_theta,
                self.delta_e * self.elbow_max.d_phi, self.delta_e * self.elbow_max.d_theta)
        return np.array([c / x if x != 0 else 0.0 for c, x in zip(coef, ext)])

    def lipschitz_bound(self) -> float:
        """Bound L with max|offset jump| <= L * max|pose jump| between any two frames.

        The uniform ratio clamp is a radial retraction, which at most doubles
        the slope.
        """
        return 2.0 * float(np.max(np.abs(self.slopes())))


def configure(model: NoticeabilityModel, extreme_pose: ArmPose, p: float = 0.75, delta_s: float = 0.5,
              combiner: str = "mean") -> AmplifierConfig:
    """Derive the maximum shoulder and elbow offsets for an extreme pose.

    A zero extreme angle disables amplification on that axis; a joint whose
    two extreme angles are both zero gets no offset at all. An extreme pose
    that is entirely zero is rejected.
    """
    if combiner not in COMBINERS:
        raise ConfigurationError(f"unknown combiner {combiner!r}")
    if not 0.0 <= delta_s <= 1.0:
        raise ConfigurationError(f"delta_s={delta_s} outside [0, 1]")
    if not p <= 1.0:
        raise ConfigurationError(f"p={p} above 1")
    base = combined_baseline(model, extreme_pose, combiner)
    if not p > base:
        raise ConfigurationError(f"p={p} must exceed the zero-offset probability {base:.6g} at the extreme pose")
    s_dir = (extreme_pose.phi_s, extreme_pose.theta_s)
    e_dir = (extreme_pose.phi_e, extreme_pose.theta_e)
    if s_dir == (0.0, 0.0) and e_dir == (0.0, 0.0):
        raise ConfigurationError("extreme pose is all zero; no direction to amplify along")
    shoulder_max = JointOffset2D()
    if s_dir != (0.0, 0.0):
        shoulder_max = max_offset_along_direction(model.level_set("shoulder", extreme_pose, p), s_dir)
    elbow_max = JointOffset2D()
    if e_dir != (0.0, 0.0):
        boundary = max_offset_along_direction(model.level_set("elbow", extreme_pose, p), e_dir)
        elbow_max = boundary + (-shoulder_max.scaled(delta_s))
    return AmplifierConfig(extreme_pose, float(p), float(delta_s), model, combiner, shoulder_max, elbow_max)


def _ratios(current: Sequence[float], extreme: Sequence[float]) -> np.ndarray:
    r = np.array([c / x if x != 0 else 0.0 for c, x in zip(current, extreme)])
    peak = float(np.max(np.abs(r)))
    if peak > RATIO_LIMIT:
        r *= RATIO_LIMIT / peak
    return r


def applied_offset(config: AmplifierConfig, pose: ArmPose) -> CompositeOffset:
    ext = config.extreme_pose
    rs = _ratios((pose.phi_s, pose.theta_s), (ext.phi_s, ext.theta_s))
    re = _ratios((pose.phi_e, pose.theta_e), (ext.phi_e, ext.theta_e))
    sm, em = config.shoulder_max, config.elbow_max
    return CompositeOffset.from_values(
        config.delta_s * rs[0] * sm.d_phi, config.delta_s * rs[1] * sm.d_theta,
        config.delta_e * re[0] * em.d_phi, config.delta_e * re[1] * em.d_theta,
    )


def amplify_frame(config: AmplifierConfig, frame: PoseFrame) -> AmplifiedFrame:
    offset = applied_offset(config, frame.pose)
    return AmplifiedFrame(frame.t, frame.pose, offset, apply_offset(frame.pose, offset))


def amplify_trajectory(config: AmplifierConfig, frames: Iterable[PoseFrame]) -> list[AmplifiedFrame]:
    out = []
    prev = -math.inf
    for i, frame in enumerate(frames):
        if not frame.t > prev:
            raise DataError(f"frame {i}: timestamp {frame.t} is not after {prev}")
        prev = frame.t
        out.append(amplify_frame(config, frame))
    return out


@dataclass(frozen=True)
class PathMetrics:
    physical_wrist: float
    physical_elbow: float
    virtual_wrist: float
    virtual_elbow: float
    final_rula: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _path_ratio(poses: Sequence[ArmPose], lengths: LimbLengths, target: ArmPose, joint: str) -> float:
    pts = np.array([getattr(forward_kinematics(p, lengths), joint) for p in poses])
    goal = getattr(forward_kinematics(target, lengths), joint)
    straight = float(np.linalg.norm(goal - pts[0]))
    if straight < 1e-12:
        raise ValueError(f"{joint} of the first frame already coincides with the target")
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()) / straight


def path_metrics(frames: Sequence[AmplifiedFrame], lengths: LimbLengths, target: ArmPose) -> PathMetrics:
    """Path length over straight-line distance to the target, for wrist and elbow.

    Both the physical and the virtual paths are measured against the joint
    positions of ``target``, each starting from its own first frame.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    phys = [f.physical for f in frames]
    virt = [f.virtual for f in frames]
    return PathMetrics(
        _path_ratio(phys, lengths, target, "wrist"),
        _path_ratio(phys, lengths, target, "elbow"),
        _path_ratio(virt, lengths, target, "wrist"),
        _path_ratio(virt, lengths, target, "elbow"),
        rula_arm_score(phys[-1]),
    )


def path_length(poses: Sequence[ArmPose], lengths: LimbLengths, joint: str = "wrist") -> float:
    pts = np.array([getattr(forward_kinematics(p, lengths), joint) for p in poses])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def solve_physical_pose(config: AmplifierConfig, virtual_target: ArmPose) -> ArmPose:
    """Physical pose whose amplified virtual pose is ``virtual_target``."""

    def residual(x):
        pose = ArmPose(wrap_phi(x[0]), min(180.0, max(0.0, x[1])), wrap_phi(x[2]), min(180.0, max(0.0, x[3])))
        v = apply_offset(pose, applied_offset(config, pose)).as_tuple()
        t = virtual_target.as_tuple()
        return [wrap_phi(v[0] - t[0]), v[1] - t[1], wrap_phi(v[2] - t[2]), v[3] - t[3]]

    res = optimize.least_squares(residual, np.array(virtual_target.as_tuple()),
                                 bounds=([-180, 0, -180, 0], [180, 180, 180, 180]), xtol=1e-12, ftol=1e-12)
    x = res.x
    return ArmPose(wrap_phi(float(x[0])), float(x[1]), wrap_phi(float(x[2])), float(x[3]))


def linear_reach(start: ArmPose, end: ArmPose, n_frames: int, dt: float = 1.0 / 90.0) -> list[PoseFrame]:
    """Frames interpolating linearly in angle space from ``start`` to ``end``."""
    if n_frames < 2:
        raise ValueError("need at least two frames")
    a, b = start.as_array(), end.as_array()
    return [PoseFrame(i * dt, ArmPose(*(a + (b - a) * (i / (n_frames - 1))))) for i in range(n_frames)]


def read_trajectory(path) -> list[PoseFrame]:
    frames = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRAJECTORY_HEADER:
            raise DataError(f"line 1: expected header {','.join(TRAJECTORY_HEADER)}")
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"line {reader.line_num}: expected 5 columns, got {len(row)}")
            try:
                vals = [float(v) for v in row]
                frames.append(PoseFrame(vals[0], ArmPose(*vals[1:])))
            except ValueError as exc:
                raise DataError(f"line {reader.line_num}: {exc}") from exc
    return frames


def write_amplified(frames: Iterable[AmplifiedFrame], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AMPLIFIED_HEADER)
        for f in frames:
            w.writerow([repr(f.t), *map(repr, f.physical.as_tuple()), *map(repr, f.applied.as_tuple()),
                        *map(repr, f.virtual.as_tuple())])
