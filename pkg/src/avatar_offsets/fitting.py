"""Noticeability model fitting.

Three layers:

* a quadratic ``p(x) = a x^2 + b x + c`` per catalog pose, joint and axis,
  fitted to single-axis probability cells;
* quadrant ellipses built from the two signed crossings of each axis
  quadratic at a probability level, giving 2D level sets per joint;
* a linear map from pose angles to the crossing magnitude at a fixed level,
  used for poses outside the catalog.

`NoticeabilityModel.probability_2d` inverts the nested level-set family by
bisection on the probability level.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .dataset import NoticeabilityDataset, aggregate
from .errors import (
    DataError,
    DegenerateFitError,
    InsufficientDataError,
    ModelNotFittedError,
    NoCrossingError,
)
from .pose_geometry import AXES, JOINTS, ArmPose

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# Stand-in semi-axis for a flat curve that never reaches the level (degrees).
SEMI_AXIS_CAP = 360.0
BISECTION_STEPS = 40
REPORTED_LEVELS = (0.3, 0.5, 0.7, 0.75, 0.9)


@dataclass(frozen=True)
class AxisQuadratic:
    a: float
    b: float
    c: float
    rmse: float = 0.0
    n_points: int = 0

    def raw(self, x):
        return self.a * np.square(x) + self.b * np.asarray(x) + self.c

    def __call__(self, x):
        out = np.clip(self.raw(x), 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def baseline(self) -> float:
        return min(1.0, max(0.0, self.c))


def fit_axis_quadratic(xs: Sequence[float], ps: Sequence[float]) -> AxisQuadratic:
    """Least-squares quadratic through ``(offset, p_hat)`` points with curvature held non-negative."""
    x = np.asarray(xs, dtype=float)
    p = np.asarray(ps, dtype=float)
    if x.shape != p.shape:
        raise ValueError("offsets and probabilities differ in length")
    if np.unique(x).size < 3:
        raise InsufficientDataError(f"need at least 3 distinct offsets, got {np.unique(x).size}")
    design = np.column_stack([x * x, x, np.ones_like(x)])
    (a, b, c), *_ = np.linalg.lstsq(design, p, rcond=None)
    if a < 0:
        (b, c), *_ = np.linalg.lstsq(design[:, 1:], p, rcond=None)
        a = 0.0
    resid = a * x * x + b * x + c - p
    return AxisQuadratic(float(a), float(b), float(c), float(np.sqrt(np.mean(resid**2))), int(x.size))


class AxisLevels(NamedTuple):
    neg: float
    pos: float
    asymmetric: bool = False


def invert_quadratic(q: AxisQuadratic, p: float) -> AxisLevels:
    """Signed offsets where the quadratic reaches ``p``; ``neg <= 0 <= pos``."""
    if not p > q.c:
        raise NoCrossingError(f"p={p} does not exceed the curve's zero-offset value {q.c}")
    if q.a > 0:
        disc = q.b * q.b - 4.0 * q.a * (q.c - p)
        if disc < 0:
            raise NoCrossingError("negative discriminant")
        root = math.sqrt(disc)
        lo = (-q.b - root) / (2.0 * q.a)
        hi = (-q.b + root) / (2.0 * q.a)
        return AxisLevels(lo, hi, not (lo <= 0.0 <= hi))
    if q.b != 0:
        # Linear curve: one crossing only; mirror it.
        x = abs((p - q.c) / q.b)
        return AxisLevels(-x, x, True)
    raise NoCrossingError("flat curve never reaches the requested probability")


def _semi_axes(q: AxisQuadratic, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized crossing magnitudes (neg, pos); zero at or below the curve's baseline."""
    p = np.asarray(p, dtype=float)
    above = p > q.c
    if q.a > 0:
        root = np.sqrt(np.maximum(q.b * q.b - 4.0 * q.a * (q.c - p), 0.0))
        neg = (q.b + root) / (2.0 * q.a)
        pos = (-q.b + root) / (2.0 * q.a)
    elif q.b != 0:
        neg = pos = np.abs((p - q.c) / q.b)
    else:
        neg = pos = np.full_like(p, SEMI_AXIS_CAP)
    neg = np.where(above, np.minimum(np.maximum(neg, 0.0), SEMI_AXIS_CAP), 0.0)
    pos = np.where(above, np.minimum(np.maximum(pos, 0.0), SEMI_AXIS_CAP), 0.0)
    return neg, pos


@dataclass(frozen=True)
class PoseLinearFit:
    """Linear map of the pose, ``A*phi_s + B*theta_s + C*phi_e + D*theta_e + E``."""

    coef: tuple[float, float, float, float, float]
    residual: float

    def predict(self, pose: ArmPose) -> float:
        return float(np.dot(self.coef[:4], pose.as_tuple()) + self.coef[4])


def pose_design(poses: Sequence[ArmPose]) -> np.ndarray:
    return np.column_stack([np.array([p.as_tuple() for p in poses], dtype=float), np.ones(len(poses))])


def _check_design(design: np.ndarray) -> None:
    if design.shape[0] < 5:
        raise InsufficientDataError(f"need at least 5 poses, got {design.shape[0]}")
    rank = np.linalg.matrix_rank(design)
    if rank < 5:
        raise DegenerateFitError(f"pose design matrix has rank {rank} < 5; poses are not affinely independent")


def fit_pose_linear(poses: Sequence[ArmPose], values: Sequence[float]) -> PoseLinearFit:
    design = pose_design(poses)
    _check_design(design)
    v = np.asarray(values, dtype=float)
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    resid = design @ coef - v
    return PoseLinearFit(tuple(float(c) for c in coef), float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class EllipseLevelSet:
    """Four quarter-ellipses sharing axis intercepts; semi-axes are magnitudes."""

    phi_pos: float
    phi_neg: float
    theta_pos: float
    theta_neg: float
    joint: str = ""
    p: float = float("nan")

    def __post_init__(self):
        if min(self.phi_pos, self.phi_neg, self.theta_pos, self.theta_neg) <= 0:
            raise ValueError("all semi-axes must be positive")

    def semi_axes_for(self, x, y):
        a = np.where(np.asarray(x) >= 0, self.phi_pos, self.phi_neg)
        b = np.where(np.asarray(y) >= 0, self.theta_pos, self.theta_neg)
        return a, b

    def gauge(self, x, y):
        """Elliptic radius: 1 on the boundary, below 1 inside."""
        a, b = self.semi_axes_for(x, y)
        return np.sqrt((np.asarray(x) / a) ** 2 + (np.asarray(y) / b) ** 2)

    def contains(self, x, y, tol: float = 1e-9):
        return self.gauge(x, y) <= 1.0 + tol

    def boundary_point(self, direction_deg: float) -> tuple[float, float]:
        a = math.radians(direction_deg)
        dx, dy = math.cos(a), math.sin(a)
        sa, sb = self.semi_axes_for(dx, dy)
        t = 1.0 / math.sqrt((dx / float(sa)) ** 2 + (dy / float(sb)) ** 2)
        return t * dx, t * dy


def ellipse_from_single_axis(phi_levels: AxisLevels, theta_levels: AxisLevels, p: float,
                             joint: str = "") -> EllipseLevelSet:
    return EllipseLevelSet(abs(phi_levels.pos), abs(phi_levels.neg),
                           abs(theta_levels.pos), abs(theta_levels.neg), joint, p)


def _gauge_sq(x, y, semis):
    pp, pn, tp, tn = semis
    a = np.where(x >= 0, pp, pn)
    b = np.where(y >= 0, tp, tn)
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = np.where(x == 0, 0.0, np.where(a > 0, (x / np.where(a > 0, a, 1.0)) ** 2, np.inf))
        gy = np.where(y == 0, 0.0, np.where(b > 0, (y / np.where(b > 0, b, 1.0)) ** 2, np.inf))
    return gx + gy


@dataclass
class NoticeabilityModel:
    """Fitted per-pose quadratics with level-set and cross-pose machinery on top."""

    catalog: list[ArmPose]
    quadratics: dict[tuple[int, str, str], AxisQuadratic]
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self._weights_cache: dict[tuple, np.ndarray] = {}
        self._linear_cache: dict[float, dict] = {}

    # -- pose handling -------------------------------------------------

    def pose_index(self, pose: ArmPose) -> int | None:
        for i, p in enumerate(self.catalog):
            if p.close_to(pose):
                return i
        return None

    def _require(self, i: int, joint: str) -> tuple[AxisQuadratic, AxisQuadratic]:
        try:
            return self.quadratics[(i, joint, "phi")], self.quadratics[(i, joint, "theta")]
        except KeyError:
            raise ModelNotFittedError(f"no fitted curves for pose {i}, joint {joint}") from None

    def _fitted_indices(self, joint: str) -> list[int]:
        return [i for i in range(len(self.catalog))
                if (i, joint, "phi") in self.quadratics and (i, joint, "theta") in self.quadratics]

    def _pose_weights(self, joint: str, pose: ArmPose) -> tuple[list[int], np.ndarray]:
        """Weights w such that the least-squares linear prediction at ``pose`` is ``w @ values``."""
        idx = self._fitted_indices(joint)
        key = (joint, pose.as_tuple())
        if key not in self._weights_cache:
            design = pose_design([self.catalog[i] for i in idx])
            _check_design(design)
            row = np.append(pose.as_array(), 1.0)
            self._weights_cache[key] = row @ np.linalg.pinv(design)
        return idx, self._weights_cache[key]

    def _check_joint(self, joint: str) -> None:
        if joint not in JOINTS:
            raise ValueError(f"unknown joint {joint!r}")

    # -- level sets ----------------------------------------------------

    def semi_axes_source(self, joint: str, pose: ArmPose) -> Callable[[np.ndarray], tuple]:
        """Function of the level returning semi-axes (phi+, phi-, theta+, theta-) at ``pose``."""
        self._check_joint(joint)
        i = self.pose_index(pose)
        if i is not None:
            qphi, qtheta = self._require(i, joint)

            def at(p):
                pn, pp = _semi_axes(qphi, p)
                tn, tp = _semi_axes(qtheta, p)
                return pp, pn, tp, tn
            return at
        idx, w = self._pose_weights(joint, pose)
        pairs = [self._require(j, joint) for j in idx]

        def at_linear(p):
            stacks = [[], [], [], []]
            for qphi, qtheta in pairs:
                pn, pp = _semi_axes(qphi, p)
                tn, tp = _semi_axes(qtheta, p)
                for k, v in enumerate((pp, pn, tp, tn)):
                    stacks[k].append(v)
            return tuple(np.maximum(np.tensordot(w, np.array(s), axes=1), 0.0) for s in stacks)
        return at_linear

    def semi_axes(self, joint: str, pose: ArmPose, p) -> tuple[np.ndarray, ...]:
        """Semi-axis magnitudes (phi+, phi-, theta+, theta-) of the level-``p`` set."""
        return self.semi_axes_source(joint, pose)(np.asarray(p, dtype=float))

    def baseline(self, joint: str, pose: ArmPose) -> float:
        """Zero-offset noticing probability, averaged over the joint's two axes."""
        self._check_joint(joint)
        i = self.pose_index(pose)
        if i is not None:
            qphi, qtheta = self._require(i, joint)
            return 0.5 * (qphi.baseline + qtheta.baseline)
        idx, w = self._pose_weights(joint, pose)
        cs = [0.5 * sum(self._require(j, joint)[k].baseline for k in range(2)) for j in idx]
        return float(np.clip(w @ np.array(cs), 0.0, 1.0))

    def level_set(self, joint: str, pose: ArmPose, p: float) -> EllipseLevelSet:
        p = min(float(p), 1.0)
        semis = [float(v) for v in self.semi_axes(joint, pose, p)]
        if min(semis) <= 0:
            raise NoCrossingError(f"level {p} is at or below the {joint} baseline for this pose")
        return EllipseLevelSet(*semis, joint=joint, p=p)

    def probability_2d(self, joint: str, pose: ArmPose, d_phi, d_theta):
        """Noticing probability of a single-joint 2D offset (vectorized over offsets)."""
        x, y = np.broadcast_arrays(np.asarray(d_phi, dtype=float), np.asarray(d_theta, dtype=float))
        base = self.baseline(joint, pose)
        out = bisect_level(x, y, base, self.semi_axes_source(joint, pose))
        return float(out) if out.ndim == 0 else out

    def pose_linear(self, p: float) -> dict[tuple[str, str, str], PoseLinearFit]:
        """Cross-pose linear fits of each crossing magnitude at level ``p`` (cached per level)."""
        key = round(float(p), 12)
        if key not in self._linear_cache:
            fits = {}
            for joint in JOINTS:
                idx = self._fitted_indices(joint)
                poses = [self.catalog[i] for i in idx]
                for axis in AXES:
                    levels = [invert_quadratic(self.quadratics[(i, joint, axis)], p) for i in idx]
                    fits[(joint, axis, "pos")] = fit_pose_linear(poses, [abs(l.pos) for l in levels])
                    fits[(joint, axis, "neg")] = fit_pose_linear(poses, [abs(l.neg) for l in levels])
            self._linear_cache[key] = fits
        return self._linear_cache[key]

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        quads = [
            {"pose": i, "joint": j, "axis": a, "a": q.a, "b": q.b, "c": q.c, "rmse": q.rmse, "n_points": q.n_points}
            for (i, j, a), q in sorted(self.quadratics.items())
        ]
        linear = {}
        for p in REPORTED_LEVELS:
            try:
                fits = self.pose_linear(p)
            except (NoCrossingError, InsufficientDataError, DegenerateFitError):
                continue
            linear[repr(p)] = [
                {"joint": j, "axis": a, "sign": s, "coef": list(f.coef), "residual": f.residual}
                for (j, a, s), f in fits.items()
            ]
        return {
            "schema_version": SCHEMA_VERSION,
            "catalog": [list(p.as_tuple()) for p in self.catalog],
            "quadratics": quads,
            "pose_linear": linear,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, data: dict) -> "NoticeabilityModel":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported model schema version {data.get('schema_version')!r}")
        try:
            catalog = [ArmPose(*p) for p in data["catalog"]]
            quads = {
                (int(q["pose"]), q["joint"], q["axis"]): AxisQuadratic(q["a"], q["b"], q["c"], q["rmse"], q.get("n_points", 0))
                for q in data["quadratics"]
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model JSON: {exc}") from exc
        return cls(catalog, quads, data.get("diagnostics", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "NoticeabilityModel":
        try:
            with open(path) as fh:
                return cls.from_json(json.load(fh))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc


def bisect_level(x: np.ndarray, y: np.ndarray, base: float,
                 semis_at: Callable[[np.ndarray], tuple]) -> np.ndarray:
    """Smallest level in [base, 1] whose set contains each point; 1 beyond the level-1 set."""
    lo = np.full(x.shape, base, dtype=float)
    hi = np.ones(x.shape, dtype=float)
    outside = _gauge_sq(x, y, semis_at(hi)) > 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        inside = _gauge_sq(x, y, semis_at(mid)) <= 1.0
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    out = np.where(outside, 1.0, hi)
    return np.where((x == 0) & (y == 0), base, out)


def single_axis_points(cells, pose_index: int, axis_slot: int) -> tuple[list[float], list[float]]:
    """Offsets and p_hat of cells whose offset is zero except possibly at one slot."""
    xs, ps = [], []
    for cell in cells:
        if cell.pose_index != pose_index:
            continue
        vals = cell.offset.as_tuple()
        if all(v == 0.0 for k, v in enumerate(vals) if k != axis_slot):
            xs.append(vals[axis_slot])
            ps.append(cell.p_hat)
    return xs, ps


def fit_model(dataset: NoticeabilityDataset) -> NoticeabilityModel:
    """Fit axis quadratics from the single-axis (phase 1) trials of every catalog pose."""
    cells = aggregate(dataset, phases=[1])
    if not cells:
        raise InsufficientDataError("dataset holds no phase-1 trials")
    fitted = sorted({c.pose_index for c in cells})
    catalog = [dataset.pose_catalog[i] for i in fitted]
    quads = {}
    for new_i, old_i in enumerate(fitted):
        for slot, (joint, axis) in enumerate((j, a) for j in JOINTS for a in AXES):
            xs, ps = single_axis_points(cells, old_i, slot)
            try:
                quads[(new_i, joint, axis)] = fit_axis_quadratic(xs, ps)
            except InsufficientDataError:
                log.warning("pose %d %s/%s: too few single-axis cells, skipped", old_i, joint, axis)
    rmse = [q.rmse for q in quads.values()]
    model = NoticeabilityModel(catalog, quads, {"phase1_mean_rmse": float(np.mean(rmse))})
    model.diagnostics.update(_phase2_diagnostics(model, dataset))
    return model


def _phase2_diagnostics(model: NoticeabilityModel, dataset: NoticeabilityDataset) -> dict:
    """RMSE of the level-set probabilities against single-joint phase-2 cells, per pose and joint."""
    groups: dict[tuple, list] = {}
    for cell in aggregate(dataset, phases=[2]):
        i = model.pose_index(dataset.pose_catalog[cell.pose_index])
        if i is None:
            continue
        for joint, other in (("shoulder", "elbow"), ("elbow", "shoulder")):
            if cell.offset.joint(other).strength == 0 and cell.offset.joint(joint).strength > 0:
                groups.setdefault((i, joint), []).append((*cell.offset.joint(joint).as_tuple(), cell.p_hat))
    out = {}
    for (i, joint), rows in sorted(groups.items()):
        arr = np.array(rows)
        try:
            pred = model.probability_2d(joint, model.catalog[i], arr[:, 0], arr[:, 1])
        except ModelNotFittedError:
            continue
        out[f"{i}/{joint}"] = float(np.sqrt(np.mean((pred - arr[:, 2]) ** 2)))
    return {"phase2_rmse": out} if out else {}
