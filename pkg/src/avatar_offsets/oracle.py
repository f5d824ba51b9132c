"""Synthetic participants, study simulation and model-recovery evaluation.

The ground truth lives in the same family the fitter assumes: per pose and
joint, the noticing probability grows with the squared elliptic radius of the
offset, from a false-positive floor up to a lapse ceiling. Saturation offsets
depend linearly on the pose so the cross-pose linear model is exact for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .catalog import DEFAULT_CATALOG, EXTREME_POSES  # noqa: F401  (re-exported)
from .dataset import (
    PHASE1_VALUES,
    PHASE3_SHOULDER_DIRECTIONS,
    NoticeabilityDataset,
    SamplingPlan,
    TrialRecord,
    phase1_plan,
    phase2_plan,
    phase3_plan,
)
from .fitting import NoticeabilityModel, fit_axis_quadratic, fit_model, invert_quadratic
from .offset_model import combine, shift_fits
from .pose_geometry import AXES, JOINTS, ArmPose, CompositeOffset, JointOffset2D

PHASE23_POSES = (0, 1, 2, 3)

# Saturation offset (degrees) = A*phi_s + B*theta_s + C*phi_e + D*theta_e + E.
DEFAULT_SATURATION = {
    ("shoulder", "phi"): (0.004, -0.015, 0.0, 0.005, 19.5),
    ("shoulder", "theta"): (-0.003, -0.010, 0.002, 0.004, 17.5),
    ("elbow", "phi"): (0.002, 0.008, -0.004, -0.012, 21.0),
    ("elbow", "theta"): (0.0, 0.006, 0.003, -0.015, 20.0),
}
RESPONSE_MODELS = ("stratified", "criterion", "bernoulli", "threshold")


@dataclass(frozen=True)
class SyntheticOracle:
    """Stand-in participant population with a known noticing-probability surface.

    ``response`` selects how simulated participants answer:

    * ``stratified`` (default): like ``criterion``, but within each block the
      ``n`` participants' criteria fall one per ``1/n`` quantile bin, in a
      random assignment; phase-1 fit residuals then sit near 0.034;
    * ``criterion``: each participant holds one uniform criterion per block of
      related tasks (a pose/axis curve, a pose/joint plane or a shoulder-offset
      group) and reports an offset when its probability exceeds the criterion;
    * ``bernoulli``: every trial is an independent draw;
    * ``threshold``: participant ``k`` of ``n`` uses the fixed criterion
      ``(k + 0.5) / n`` everywhere, giving a noise-free stratified response.
    """

    saturation: dict = field(default_factory=lambda: dict(DEFAULT_SATURATION))
    fp: float = 0.02
    lapse: float = 0.02
    shift: bool = True
    combiner: str = "mean"
    response: str = "stratified"

    def __post_init__(self):
        if not 0 <= self.fp <= 0.1 or not 0 <= self.lapse <= 0.1:
            raise ValueError("fp and lapse must lie in [0, 0.1]")
        if self.response not in RESPONSE_MODELS:
            raise ValueError(f"unknown response model {self.response!r}")

    def saturation_offset(self, joint: str, axis: str, pose: ArmPose) -> float:
        coef = self.saturation[(joint, axis)]
        s = float(np.dot(coef[:4], pose.as_tuple()) + coef[4])
        if s <= 0:
            raise ValueError(f"non-positive saturation offset for {joint}/{axis} at {pose}")
        return s

    @property
    def gain(self) -> float:
        return 1.0 - self.fp - self.lapse

    def joint_probability(self, joint: str, pose: ArmPose, d_phi, d_theta):
        s_phi = self.saturation_offset(joint, "phi", pose)
        s_theta = self.saturation_offset(joint, "theta", pose)
        rho2 = (np.asarray(d_phi, dtype=float) / s_phi) ** 2 + (np.asarray(d_theta, dtype=float) / s_theta) ** 2
        out = self.fp + self.gain * np.minimum(rho2, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def probability_arrays(self, pose: ArmPose, s_phi, s_theta, e_phi, e_theta):
        """Noticing probability of composite offsets.

        An offset on one joint only is answered from that joint's own
        distribution, which is what the single-joint phases measure. Offsets on
        both joints use the shift rule and the combiner.
        """
        s_phi, s_theta, e_phi, e_theta = np.broadcast_arrays(
            *(np.asarray(v, dtype=float) for v in (s_phi, s_theta, e_phi, e_theta)))
        p_s = self.joint_probability("shoulder", pose, s_phi, s_theta)
        p_e_own = self.joint_probability("elbow", pose, e_phi, e_theta)
        if self.shift:
            p_e = self.joint_probability("elbow", pose, e_phi + s_phi, e_theta + s_theta)
        else:
            p_e = p_e_own
        s_zero = (s_phi == 0) & (s_theta == 0)
        e_zero = (e_phi == 0) & (e_theta == 0)
        out = np.where(s_zero, p_e_own, np.where(e_zero, p_s, combine(self.combiner, p_s, p_e)))
        return float(out) if out.ndim == 0 else out

    def probability(self, pose: ArmPose, offset: CompositeOffset) -> float:
        return float(self.probability_arrays(pose, *offset.as_tuple()))

    def level_radius(self, p: float) -> float:
        """Elliptic radius at which a single joint reaches probability ``p``."""
        if not self.fp < p <= self.fp + self.gain:
            raise ValueError(f"p={p} outside ({self.fp}, {self.fp + self.gain}]")
        return math.sqrt((p - self.fp) / self.gain)

    def level_offset(self, joint: str, pose: ArmPose, p: float, direction_deg: float) -> JointOffset2D:
        a = math.radians(direction_deg)
        dx, dy = math.cos(a), math.sin(a)
        s_phi = self.saturation_offset(joint, "phi", pose)
        s_theta = self.saturation_offset(joint, "theta", pose)
        t = self.level_radius(p) / math.hypot(dx / s_phi, dy / s_theta)
        return JointOffset2D(t * dx, t * dy)

    def axis_level(self, joint: str, axis: str, pose: ArmPose, p: float) -> float:
        """Single-axis offset magnitude at probability ``p`` (same on both signs)."""
        return self.level_radius(p) * self.saturation_offset(joint, axis, pose)


def expected_model(oracle: SyntheticOracle, catalog: Sequence[ArmPose] = DEFAULT_CATALOG) -> NoticeabilityModel:
    """Model fitted to the exact expected single-axis probabilities (no sampling noise)."""
    quads = {}
    values = [float(v) for v in PHASE1_VALUES]
    for i, pose in enumerate(catalog):
        for slot, (joint, axis) in enumerate((j, a) for j in JOINTS for a in AXES):
            offs = np.zeros((len(values), 4))
            offs[:, slot] = values
            ps = oracle.probability_arrays(pose, *offs.T)
            quads[(i, joint, axis)] = fit_axis_quadratic(values, ps)
    rmse = [q.rmse for q in quads.values()]
    return NoticeabilityModel(list(catalog), quads, {"phase1_mean_rmse": float(np.mean(rmse))})


def oracle_respond(oracle: SyntheticOracle, pose: ArmPose, offset: CompositeOffset,
                   rng: np.random.Generator) -> bool:
    """One independent yes/no judgement drawn with the oracle's noticing probability."""
    return bool(rng.random() < oracle.probability(pose, offset))


def _block_key(phase: int, pose_index: int, offset: CompositeOffset) -> tuple:
    """Tasks sharing a key share a participant's criterion under the ``criterion`` model."""
    v = offset.as_tuple()
    if phase == 1:
        nz = [k for k, x in enumerate(v) if x != 0.0]
        return (phase, pose_index, nz[0] if nz else -1)
    if phase == 2:
        return (phase, pose_index, 0 if offset.shoulder.strength > 0 else 1)
    return (phase, pose_index, tuple(round(x, 6) for x in offset.shoulder.as_tuple()))


def answer_plan(oracle: SyntheticOracle, plan: SamplingPlan, participant: int, n_participants: int,
                seed: int) -> list[TrialRecord]:
    probs = np.array([oracle.probability(plan.poses[i], off) for i, off in plan.tasks])
    rng = np.random.default_rng([seed, participant, plan.phase])
    if oracle.response == "bernoulli":
        u = rng.random(len(plan.tasks))
    elif oracle.response == "threshold":
        u = np.full(len(plan.tasks), (participant + 0.5) / n_participants)
    else:
        keys = [_block_key(plan.phase, i, off) for i, off in plan.tasks]
        distinct = sorted(set(keys), key=repr)
        if oracle.response == "stratified":
            # Bin assignment is shared by all participants of one study (seeded by
            # block order only), so every block spans all n bins exactly once.
            shared = np.random.default_rng([seed, plan.phase, n_participants])
            bins = [shared.permutation(n_participants)[participant] for _ in distinct]
            draws = {k: (b + rng.random()) / n_participants for k, b in zip(distinct, bins)}
        else:
            draws = dict(zip(distinct, rng.random(len(distinct))))
        u = np.array([draws[k] for k in keys])
    pid = f"P{participant + 1:02d}"
    return [TrialRecord(pid, plan.phase, plan.poses[i], off, bool(pr > uu))
            for (i, off), pr, uu in zip(plan.tasks, probs, u)]


def true_shoulder_offsets(oracle: SyntheticOracle, pose: ArmPose, p: float = 0.3) -> list[JointOffset2D]:
    return [oracle.level_offset("shoulder", pose, p, d) for d in PHASE3_SHOULDER_DIRECTIONS]


def fitted_shoulder_offsets(model: NoticeabilityModel, pose: ArmPose, p: float = 0.3) -> list[JointOffset2D]:
    ls = model.level_set("shoulder", pose, p)
    return [JointOffset2D(*ls.boundary_point(d)) for d in PHASE3_SHOULDER_DIRECTIONS]


def simulate_study(
    oracle: SyntheticOracle,
    catalog: Sequence[ArmPose] = DEFAULT_CATALOG,
    n_participants: int = 12,
    seed: int = 0,
    phase23_poses: Sequence[int] = PHASE23_POSES,
    chained: bool = False,
) -> NoticeabilityDataset:
    """Run the three phases for ``n_participants`` simulated participants.

    Each participant gets an independently shuffled plan and a response stream
    derived from ``(seed, participant, phase)``.
    """
    if n_participants < 1:
        raise ValueError("n_participants must be at least 1")
    catalog = list(catalog)
    sub = [catalog[i] for i in phase23_poses if i < len(catalog)]
    records: list[TrialRecord] = []
    for k in range(n_participants):
        records += answer_plan(oracle, phase1_plan(catalog, seed * 1000 + 3 * k), k, n_participants, seed)
    if chained:
        model = fit_model(NoticeabilityDataset(list(records), list(catalog)))
        shoulder = [fitted_shoulder_offsets(model, p) for p in sub]
    else:
        shoulder = [true_shoulder_offsets(oracle, p) for p in sub]
    for k in range(n_participants):
        if sub:
            records += answer_plan(oracle, phase2_plan(sub, seed * 1000 + 3 * k + 1), k, n_participants, seed)
            records += answer_plan(oracle, phase3_plan(sub, shoulder, seed * 1000 + 3 * k + 2),
                                   k, n_participants, seed)
    return NoticeabilityDataset(records, list(catalog))


@dataclass
class RecoveryReport:
    half_level_errors: dict[str, float]
    ellipse_errors: dict[str, float]
    shift_errors: list[dict]
    shift_gain: float
    trial_counts: dict[int, int]
    phase1_mean_rmse: float

    @property
    def mean_half_level_error(self) -> float:
        return float(np.mean(list(self.half_level_errors.values())))

    @property
    def mean_shift_error(self) -> float:
        return float(np.mean([s["error"] for s in self.shift_errors])) if self.shift_errors else float("nan")

    @property
    def mean_free_center_error(self) -> float:
        return float(np.mean([s["free_error"] for s in self.shift_errors])) if self.shift_errors else float("nan")

    @property
    def max_shift_error(self) -> float:
        return float(max(s["error"] for s in self.shift_errors)) if self.shift_errors else float("nan")

    def to_json(self) -> dict:
        return {
            "mean_half_level_error": self.mean_half_level_error,
            "mean_shift_error": self.mean_shift_error,
            "max_shift_error": self.max_shift_error,
            "mean_free_center_error": self.mean_free_center_error,
            "shift_gain": self.shift_gain,
            "phase1_mean_rmse": self.phase1_mean_rmse,
            "half_level_errors": self.half_level_errors,
            "ellipse_errors": self.ellipse_errors,
            "shift_errors": self.shift_errors,
            "trial_counts": {str(k): v for k, v in sorted(self.trial_counts.items())},
        }


def evaluate_recovery(dataset: NoticeabilityDataset, oracle: SyntheticOracle,
                      model: NoticeabilityModel | None = None) -> RecoveryReport:
    """Fit the model to ``dataset`` and compare it against the oracle's ground truth."""
    if model is None:
        model = fit_model(dataset)
    half: dict[str, float] = {}
    ellipse: dict[str, float] = {}
    for i, pose in enumerate(model.catalog):
        for joint in JOINTS:
            for axis in AXES:
                q = model.quadratics.get((i, joint, axis))
                if q is None:
                    continue
                truth = oracle.axis_level(joint, axis, pose, 0.5)
                lv = invert_quadratic(q, 0.5)
                half[f"{i}/{joint}/{axis}/pos"] = abs(abs(lv.pos) - truth)
                half[f"{i}/{joint}/{axis}/neg"] = abs(abs(lv.neg) - truth)
            ls = model.level_set(joint, pose, 0.5)
            errs = []
            for d in range(0, 360, 15):
                fx, fy = ls.boundary_point(d)
                t = oracle.level_offset(joint, pose, 0.5, d)
                errs.append(math.hypot(fx - t.d_phi, fy - t.d_theta))
            ellipse[f"{i}/{joint}"] = float(np.mean(errs))
    fits = shift_fits(model, dataset, oracle.combiner)
    gain = fits["gain"]
    shifts = []
    for g in fits["groups"]:
        sx, sy = g["shoulder"]
        pooled = (-gain * sx, -gain * sy)
        shifts.append({
            **g,
            "expected": [-sx, -sy],
            "pooled_center": list(pooled),
            "error": math.hypot(pooled[0] + sx, pooled[1] + sy),
            "free_error": math.hypot(g["center"][0] + sx, g["center"][1] + sy),
        })
    counts: dict[int, int] = {}
    for r in dataset.records:
        counts[r.phase] = counts.get(r.phase, 0) + 1
    return RecoveryReport(half, ellipse, shifts, gain, counts,
                          float(model.diagnostics.get("phase1_mean_rmse", float("nan"))))
