"""Arm poses in spherical coordinates, offsets, forward kinematics and RULA.

Angles are in degrees throughout. The body frame is right-handed with
x = body-right, y = body-up, z = body-forward, and the shoulder at the
origin. A polar angle of 0 points the limb straight down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

JOINTS = ("shoulder", "elbow")
AXES = ("phi", "theta")


def wrap_phi(angle: float) -> float:
    """Wrap an azimuth to the half-open interval (-180, 180]."""
    return angle - 360.0 * math.ceil((angle - 180.0) / 360.0)


def clamp_theta(angle: float) -> float:
    return min(180.0, max(0.0, angle))


@dataclass(frozen=True)
class ArmPose:
    phi_s: float
    theta_s: float
    phi_e: float
    theta_e: float

    def __post_init__(self):
        values = self.as_tuple()
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite pose angle in {values}")
        for name in ("theta_s", "theta_e"):
            v = getattr(self, name)
            if not 0.0 <= v <= 180.0:
                raise ValueError(f"{name}={v} outside [0, 180]")
        for name in ("phi_s", "phi_e"):
            v = getattr(self, name)
            if not -180.0 < v <= 180.0:
                raise ValueError(f"{name}={v} outside (-180, 180]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.phi_s, self.theta_s, self.phi_e, self.theta_e)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def parse(cls, text: str) -> "ArmPose":
        """Parse ``"phi_s,theta_s,phi_e,theta_e"``."""
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ValueError(f"expected 4 comma-separated angles, got {text!r}")
        return cls(*(float(p) for p in parts))

    def close_to(self, other: "ArmPose", tol: float = 1e-6) -> bool:
        return all(abs(a - b) <= tol for a, b in zip(self.as_tuple(), other.as_tuple()))


@dataclass(frozen=True)
class JointOffset2D:
    d_phi: float = 0.0
    d_theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.d_phi) and math.isfinite(self.d_theta)):
            raise ValueError("non-finite joint offset")

    @property
    def strength(self) -> float:
        return math.hypot(self.d_phi, self.d_theta)

    def __add__(self, other: "JointOffset2D") -> "JointOffset2D":
        return JointOffset2D(self.d_phi + other.d_phi, self.d_theta + other.d_theta)

    def __neg__(self) -> "JointOffset2D":
        return JointOffset2D(-self.d_phi, -self.d_theta)

    def scaled(self, k: float) -> "JointOffset2D":
        return JointOffset2D(k * self.d_phi, k * self.d_theta)

    def as_tuple(self) -> tuple[float, float]:
        return (self.d_phi, self.d_theta)


@dataclass(frozen=True)
class CompositeOffset:
    shoulder: JointOffset2D = JointOffset2D()
    elbow: JointOffset2D = JointOffset2D()

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.shoulder.as_tuple() + self.elbow.as_tuple()

    @classmethod
    def from_values(cls, d_phi_s, d_theta_s, d_phi_e, d_theta_e) -> "CompositeOffset":
        return cls(JointOffset2D(float(d_phi_s), float(d_theta_s)),
                   JointOffset2D(float(d_phi_e), float(d_theta_e)))

    @classmethod
    def parse(cls, text: str) -> "CompositeOffset":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ValueError(f"expected 4 comma-separated offsets, got {text!r}")
        return cls.from_values(*(float(p) for p in parts))

    def joint(self, name: str) -> JointOffset2D:
        return getattr(self, name)

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.as_tuple())


ZERO_OFFSET = CompositeOffset()


@dataclass(frozen=True)
class LimbLengths:
    upper_arm: float = 0.3
    forearm: float = 0.25

    def __post_init__(self):
        if not (self.upper_arm > 0 and self.forearm > 0):
            raise ValueError("limb lengths must be strictly positive")


@dataclass(frozen=True)
class JointPositions:
    shoulder: np.ndarray
    elbow: np.ndarray
    wrist: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [self.shoulder, self.elbow, self.wrist]

    def to_json(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)] for k in ("shoulder", "elbow", "wrist")}


def apply_offset(pose: ArmPose, offset: CompositeOffset) -> ArmPose:
    """Add a composite offset to a pose, clamping polar and wrapping azimuthal angles."""
    s, e = offset.shoulder, offset.elbow
    return ArmPose(
        wrap_phi(pose.phi_s + s.d_phi),
        clamp_theta(pose.theta_s + s.d_theta),
        wrap_phi(pose.phi_e + e.d_phi),
        clamp_theta(pose.theta_e + e.d_theta),
    )


def upper_arm_direction(phi_s: float, theta_s: float) -> np.ndarray:
    ph, th = math.radians(phi_s), math.radians(theta_s)
    return np.array([math.sin(th) * math.cos(ph), -math.cos(th), math.sin(th) * math.sin(ph)])


def elbow_frame(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth reference and its quadrature axis for a forearm frame with polar axis ``u``.

    The reference is body-forward projected onto the plane orthogonal to ``u``;
    body-up is used instead when ``u`` is (anti)parallel to body-forward.
    """
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(u @ ref)) > 1.0 - 1e-9:
        ref = np.array([0.0, 1.0, 0.0])
    r = ref - (ref @ u) * u
    r /= np.linalg.norm(r)
    return r, np.cross(u, r)


def forward_kinematics(pose: ArmPose, lengths: LimbLengths = LimbLengths()) -> JointPositions:
    u = upper_arm_direction(pose.phi_s, pose.theta_s)
    r, w = elbow_frame(u)
    ph, th = math.radians(pose.phi_e), math.radians(pose.theta_e)
    d = math.cos(th) * u + math.sin(th) * (math.cos(ph) * r + math.sin(ph) * w)
    shoulder = np.zeros(3)
    elbow = lengths.upper_arm * u
    wrist = elbow + lengths.forearm * d
    return JointPositions(shoulder, elbow, wrist)


def skeletal_distance(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]]) -> float:
    """Max over joints of the per-joint L1 distance between two joint lists."""
    if len(a) != len(b) or len(a) == 0:
        raise ValueError(f"joint lists must be non-empty and equal length ({len(a)} vs {len(b)})")
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return float(diff.sum(axis=1).max())


def upper_arm_score(theta_s: float) -> int:
    if theta_s <= 20:
        return 1
    if theta_s <= 45:
        return 2
    if theta_s <= 90:
        return 3
    return 4


def lower_arm_score(theta_e: float) -> int:
    flexion = 180.0 - theta_e
    return 1 if 60 <= flexion <= 100 else 2


def rula_arm_score(pose: ArmPose) -> int:
    """Upper-limb RULA proxy: upper-arm band score plus lower-arm band score.

    Not the full RULA worksheet; wrist, neck, trunk and the lookup tables
    are omitted. Lower is easier.
    """
    return upper_arm_score(pose.theta_s) + lower_arm_score(pose.theta_e)
