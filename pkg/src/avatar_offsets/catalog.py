"""Pose catalogs: the built-in ten-pose catalog and k-medoids selection of representative poses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pose_geometry import ArmPose, LimbLengths, forward_kinematics

# Raising the arm forward, upward, to the side, and putting it down; elbow straight.
EXTREME_POSES = (
    ArmPose(90.0, 90.0, 0.0, 0.0),
    ArmPose(0.0, 180.0, 0.0, 0.0),
    ArmPose(0.0, 90.0, 0.0, 0.0),
    ArmPose(0.0, 0.0, 0.0, 0.0),
)
EXTREME_LABELS = ("forward", "upward", "sideward", "downward")

DEFAULT_CATALOG = (
    ArmPose(30.0, 60.0, 10.0, 45.0),
    ArmPose(60.0, 45.0, 90.0, 60.0),
    ArmPose(-20.0, 30.0, -45.0, 90.0),
    ArmPose(45.0, 120.0, 30.0, 100.0),
    ArmPose(10.0, 75.0, 120.0, 30.0),
    ArmPose(80.0, 100.0, -60.0, 75.0),
) + EXTREME_POSES


@dataclass(frozen=True)
class PoseCatalog:
    poses: tuple[ArmPose, ...]
    labels: tuple[str, ...]
    provenance: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.poses)


def joint_matrix(poses: Sequence[ArmPose], lengths: LimbLengths = LimbLengths(1.0, 1.0)) -> np.ndarray:
    """Joint positions as an array of shape (n, 3 joints, 3 coords)."""
    return np.array([[j for j in forward_kinematics(p, lengths).as_list()] for p in poses])


def skeletal_distance_matrix(joints: np.ndarray) -> np.ndarray:
    """Pairwise max-over-joints L1 distance for a (n, L, 3) array."""
    diff = np.abs(joints[:, None, :, :] - joints[None, :, :, :]).sum(axis=-1)
    return diff.max(axis=-1)


def k_medoids(dist: np.ndarray, k: int, seed: int, max_iter: int = 100) -> np.ndarray:
    """Alternating k-medoids with k-medoids++ seeding; returns sorted medoid indices."""
    n = dist.shape[0]
    rng = np.random.default_rng(seed)
    medoids = [int(rng.integers(n))]
    for _ in range(1, k):
        d = dist[:, medoids].min(axis=1)
        if d.sum() == 0:
            remaining = np.setdiff1d(np.arange(n), medoids)
            medoids.append(int(remaining[0]))
            continue
        medoids.append(int(rng.choice(n, p=d / d.sum())))
    medoids = np.array(sorted(medoids))
    for _ in range(max_iter):
        assign = np.argmin(dist[:, medoids], axis=1)
        updated = medoids.copy()
        for c in range(k):
            members = np.flatnonzero(assign == c)
            if members.size:
                cost = dist[np.ix_(members, members)].sum(axis=1)
                updated[c] = members[int(np.argmin(cost))]
        updated = np.array(sorted(updated))
        if np.array_equal(updated, medoids):
            break
        medoids = updated
    return medoids


def select_representative_poses(pose_sample: Sequence[ArmPose], k: int, seed: int = 0) -> PoseCatalog:
    """k medoids of the sample under skeletal distance, plus the four extreme poses.

    The sample is put in a canonical order first, so the result does not
    depend on input order. Memory is quadratic in the sample size.
    """
    if not 1 <= k <= len(pose_sample):
        raise ValueError(f"k={k} must be between 1 and the sample size {len(pose_sample)}")
    ordered = sorted(pose_sample, key=lambda p: p.as_tuple())
    dist = skeletal_distance_matrix(joint_matrix(ordered))
    medoids = [ordered[i] for i in k_medoids(dist, k, seed)]
    poses = list(medoids)
    labels = [f"cluster{i}" for i in range(len(medoids))]
    provenance = ["clustered"] * len(medoids)
    for pose, label in zip(EXTREME_POSES, EXTREME_LABELS):
        if not any(pose.close_to(m) for m in medoids):
            poses.append(pose)
            labels.append(label)
            provenance.append("extreme")
    return PoseCatalog(tuple(poses), tuple(labels), tuple(provenance))
