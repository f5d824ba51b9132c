"""Trial records, the three sampling plans, CSV I/O and aggregation into probability cells."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .pose_geometry import ArmPose, CompositeOffset, JointOffset2D

TRIAL_HEADER = [
    "participant", "phase",
    "pose_phi_s", "pose_theta_s", "pose_phi_e", "pose_theta_e",
    "off_phi_s", "off_theta_s", "off_phi_e", "off_theta_e",
    "noticed",
]
PLAN_HEADER = [c for c in TRIAL_HEADER if c not in ("participant", "noticed")]
POSE_HEADER = ["phi_s", "theta_s", "phi_e", "theta_e"]

PHASE1_VALUES = tuple(range(-15, 16, 3))
PHASE2_RADII = (12, 15, 18, 21, 24)
PHASE2_DIRECTIONS = tuple(range(0, 360, 15))
# Four of the 9..24 step-3 grid; keeps both endpoints and the 1024-task count.
PHASE3_RADII = (9, 15, 21, 24)
PHASE3_DIRECTIONS = tuple(range(0, 360, 45))
PHASE3_SHOULDER_DIRECTIONS = tuple(range(0, 360, 45))


@dataclass(frozen=True)
class TrialRecord:
    participant: str
    phase: int
    pose: ArmPose
    offset: CompositeOffset
    noticed: bool

    def __post_init__(self):
        if self.phase not in (1, 2, 3):
            raise ValueError(f"invalid phase {self.phase!r}")


@dataclass(frozen=True)
class SamplingPlan:
    phase: int
    poses: tuple[ArmPose, ...]
    tasks: tuple[tuple[int, CompositeOffset], ...]

    def __len__(self) -> int:
        return len(self.tasks)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(PLAN_HEADER)
            for idx, off in self.tasks:
                w.writerow([self.phase, *map(repr, self.poses[idx].as_tuple()), *map(repr, off.as_tuple())])


@dataclass(frozen=True)
class ProbabilityCell:
    pose_index: int
    offset: CompositeOffset
    n_trials: int
    n_noticed: int

    @property
    def p_hat(self) -> float:
        return self.n_noticed / self.n_trials


@dataclass
class NoticeabilityDataset:
    records: list[TrialRecord] = field(default_factory=list)
    pose_catalog: list[ArmPose] = field(default_factory=list)

    def __post_init__(self):
        self._index: dict[ArmPose, int] = {}
        for rec in self.records:
            if self.find_pose(rec.pose) is None:
                self.pose_catalog.append(rec.pose)

    def find_pose(self, pose: ArmPose, tol: float = 1e-6) -> int | None:
        """Catalog index of ``pose`` (angles within ``tol``), or None."""
        hit = self._index.get(pose)
        if hit is not None and hit < len(self.pose_catalog) and self.pose_catalog[hit] == pose:
            return hit
        for i, p in enumerate(self.pose_catalog):
            if p.close_to(pose, tol):
                self._index[pose] = i
                return i
        return None

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NoticeabilityDataset):
            return NotImplemented
        return self.records == other.records


def _shuffle(tasks: list, seed: int) -> tuple:
    order = np.random.default_rng(seed).permutation(len(tasks))
    return tuple(tasks[i] for i in order)


def polar_offset(radius: float, direction_deg: float) -> JointOffset2D:
    a = math.radians(direction_deg)
    return JointOffset2D(round(radius * math.cos(a), 10) + 0.0, round(radius * math.sin(a), 10) + 0.0)


def phase1_plan(poses: Sequence[ArmPose], seed: int) -> SamplingPlan:
    """Single-axis offsets of -15..15 degrees (step 3) on each of the four axes."""
    if not poses:
        raise ValueError("at least one pose is required")
    tasks = []
    for i in range(len(poses)):
        for axis in range(4):
            for v in PHASE1_VALUES:
                vals = [0.0] * 4
                vals[axis] = float(v)
                tasks.append((i, CompositeOffset.from_values(*vals)))
    return SamplingPlan(1, tuple(poses), _shuffle(tasks, seed))


def phase2_plan(poses: Sequence[ArmPose], seed: int) -> SamplingPlan:
    """Single-joint 2D offsets on concentric circles, 24 directions per circle."""
    if not poses:
        raise ValueError("at least one pose is required")
    tasks = []
    for i in range(len(poses)):
        for joint in ("shoulder", "elbow"):
            for r in PHASE2_RADII:
                for d in PHASE2_DIRECTIONS:
                    off = polar_offset(r, d)
                    comp = CompositeOffset(shoulder=off) if joint == "shoulder" else CompositeOffset(elbow=off)
                    tasks.append((i, comp))
    return SamplingPlan(2, tuple(poses), _shuffle(tasks, seed))


def phase3_plan(
    poses: Sequence[ArmPose],
    shoulder_offsets: Sequence[Sequence[JointOffset2D]],
    seed: int,
) -> SamplingPlan:
    """Composite offsets: for each of 8 shoulder offsets, elbow circles centred at the negated shoulder offset."""
    if not poses:
        raise ValueError("at least one pose is required")
    if len(shoulder_offsets) != len(poses):
        raise ValueError("need one list of shoulder offsets per pose")
    tasks = []
    for i, offsets in enumerate(shoulder_offsets):
        if len(offsets) != 8:
            raise ValueError(f"pose {i}: expected 8 shoulder offsets, got {len(offsets)}")
        for s in offsets:
            for r in PHASE3_RADII:
                for d in PHASE3_DIRECTIONS:
                    e = polar_offset(r, d) + (-s)
                    tasks.append((i, CompositeOffset(s, e)))
    return SamplingPlan(3, tuple(poses), _shuffle(tasks, seed))


def _offset_key(offset: CompositeOffset) -> tuple:
    return tuple(round(v, 6) + 0.0 for v in offset.as_tuple())


def aggregate(dataset: NoticeabilityDataset, phases: Iterable[int] | None = None) -> list[ProbabilityCell]:
    """Group records by (pose, offset) and count noticed responses.

    Cells are emitted in order of first appearance.
    """
    wanted = set(phases) if phases is not None else None
    counts: dict[tuple, list] = {}
    for rec in dataset.records:
        if wanted is not None and rec.phase not in wanted:
            continue
        idx = dataset.find_pose(rec.pose)
        key = (idx, _offset_key(rec.offset))
        if key not in counts:
            counts[key] = [rec.offset, 0, 0]
        counts[key][1] += 1
        counts[key][2] += int(rec.noticed)
    return [ProbabilityCell(k[0], v[0], v[1], v[2]) for k, v in counts.items()]


def _parse_bool(text: str, line: int) -> bool:
    if text == "1":
        return True
    if text == "0":
        return False
    raise DataError(f"line {line}: 'noticed' must be 0 or 1, got {text!r}")


def read_trials(path) -> NoticeabilityDataset:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return NoticeabilityDataset()
        if [h.strip() for h in header] != TRIAL_HEADER:
            raise DataError(f"line 1: unexpected header {header}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(TRIAL_HEADER):
                raise DataError(f"line {line}: expected {len(TRIAL_HEADER)} columns, got {len(row)}")
            try:
                phase = int(row[1])
                pose = ArmPose(*(float(v) for v in row[2:6]))
                offset = CompositeOffset.from_values(*(float(v) for v in row[6:10]))
            except ValueError as exc:
                raise DataError(f"line {line}: {exc}") from exc
            if phase not in (1, 2, 3):
                raise DataError(f"line {line}: phase must be 1, 2 or 3, got {phase}")
            records.append(TrialRecord(row[0], phase, pose, offset, _parse_bool(row[10].strip(), line)))
    return NoticeabilityDataset(records)


def write_trials(dataset: NoticeabilityDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_HEADER)
        for r in dataset.records:
            w.writerow([r.participant, r.phase, *map(repr, r.pose.as_tuple()),
                        *map(repr, r.offset.as_tuple()), int(r.noticed)])


def read_poses(path) -> list[ArmPose]:
    """Read a pose CSV (``phi_s,theta_s,phi_e,theta_e``); a header row is optional."""
    poses = []
    with open(path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh), start=1):
            if not row or (n == 1 and row[0].strip() == "phi_s"):
                continue
            if len(row) != 4:
                raise DataError(f"line {n}: expected 4 columns, got {len(row)}")
            try:
                poses.append(ArmPose(*(float(v) for v in row)))
            except ValueError as exc:
                raise DataError(f"line {n}: {exc}") from exc
    return poses


def write_poses(poses: Iterable[ArmPose], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSE_HEADER)
        for p in poses:
            w.writerow([repr(v) for v in p.as_tuple()])
