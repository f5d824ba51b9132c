"""Composite shoulder+elbow offsets: the shift rule, combiners and the applicable offset set.

A shoulder offset ``s`` moves the centre of the elbow's noticing distribution
to ``-s``, so the elbow is evaluated at ``e + s``. The two single-joint
probabilities are then merged by a combiner (arithmetic mean by default).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import EmptySetError, NoCrossingError
from .fitting import EllipseLevelSet, NoticeabilityModel, _gauge_sq
from .pose_geometry import ArmPose, CompositeOffset, JointOffset2D

log = logging.getLogger(__name__)

COMBINERS = ("mean", "max", "noisy_or")
MEMBERSHIP_TOL = 1e-9
MAX_REJECTIONS = 1_000_000
# When the candidate regions are unbounded, samples are drawn from the level-1
# boxes scaled by this factor.
SAMPLING_EXTENT = 2.0


def combine(kind: str, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind == "mean":
        out = 0.5 * (a + b)
    elif kind == "max":
        out = np.maximum(a, b)
    elif kind == "noisy_or":
        out = 1.0 - (1.0 - a) * (1.0 - b)
    else:
        raise ValueError(f"unknown combiner {kind!r}; choose from {', '.join(COMBINERS)}")
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def composite_probability_arrays(model: NoticeabilityModel, pose: ArmPose,
                                 s_phi, s_theta, e_phi, e_theta, combiner: str = "mean"):
    """Vectorized composite probability; the shift enters only through the elbow argument."""
    s_phi, s_theta, e_phi, e_theta = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (s_phi, s_theta, e_phi, e_theta)))
    p_s = model.probability_2d("shoulder", pose, s_phi, s_theta)
    p_e = model.probability_2d("elbow", pose, e_phi + s_phi, e_theta + s_theta)
    return combine(combiner, p_s, p_e)


def composite_probability(model: NoticeabilityModel, pose: ArmPose, offset: CompositeOffset,
                          combiner: str = "mean") -> float:
    s, e = offset.shoulder, offset.elbow
    return float(composite_probability_arrays(model, pose, s.d_phi, s.d_theta, e.d_phi, e.d_theta, combiner))


def combined_baseline(model: NoticeabilityModel, pose: ArmPose, combiner: str = "mean") -> float:
    return combine(combiner, model.baseline("shoulder", pose), model.baseline("elbow", pose))


def max_offset_along_direction(levelset: EllipseLevelSet, direction: Sequence[float]) -> JointOffset2D:
    """Boundary point of a quadrant ellipse along the ray from its centre through ``direction``."""
    dx, dy = float(direction[0]), float(direction[1])
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise ValueError("direction must be non-zero")
    dx, dy = dx / norm, dy / norm
    a = levelset.phi_pos if dx >= 0 else levelset.phi_neg
    b = levelset.theta_pos if dy >= 0 else levelset.theta_neg
    t = 1.0 / math.sqrt((dx / a) ** 2 + (dy / b) ** 2)
    return JointOffset2D(t * dx, t * dy)


@dataclass(frozen=True)
class ApplicableSet:
    """Composite offsets with noticing probability at most ``p``, held parametrically.

    Candidates are shoulder offsets inside the shoulder's level-2p set and
    elbow offsets inside the elbow's level-2p set translated to ``-s``; a
    candidate is a member when its composite probability is at most ``p``.
    For ``p >= 0.5`` the bound is vacuous (every single-joint probability is
    at most 1), so the candidate regions are the whole plane and the stored
    semi-axes are infinite.
    """

    model: NoticeabilityModel
    pose: ArmPose
    p: float
    combiner: str
    shoulder_semi_axes: tuple[float, float, float, float]
    elbow_semi_axes: tuple[float, float, float, float]
    reason: str = ""

    @property
    def empty(self) -> bool:
        return bool(self.reason)

    @property
    def region_level(self) -> float:
        return min(2.0 * self.p, 1.0)

    @property
    def bounded(self) -> bool:
        return 2.0 * self.p < 1.0

    def contains_arrays(self, s_phi, s_theta, e_phi, e_theta) -> np.ndarray:
        arrays = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s_phi, s_theta, e_phi, e_theta)))
        shape = arrays[0].shape
        s_phi, s_theta, e_phi, e_theta = (a.ravel() for a in arrays)
        if self.empty:
            return np.zeros(shape, dtype=bool)
        in_s = _gauge_sq(s_phi, s_theta, self.shoulder_semi_axes) <= 1.0 + MEMBERSHIP_TOL
        in_e = _gauge_sq(e_phi + s_phi, e_theta + s_theta, self.elbow_semi_axes) <= 1.0 + MEMBERSHIP_TOL
        member = in_s & in_e
        if member.any():
            prob = composite_probability_arrays(self.model, self.pose, s_phi[member], s_theta[member],
                                                e_phi[member], e_theta[member], self.combiner)
            member[member] = np.asarray(prob) <= self.p
        return member.reshape(shape)

    def contains(self, offset: CompositeOffset) -> bool:
        return bool(self.contains_arrays(*offset.as_tuple()))

    def to_json(self) -> dict:
        keys = ("phi_pos", "phi_neg", "theta_pos", "theta_neg")

        def semis(values):
            return {k: (v if math.isfinite(v) else None) for k, v in zip(keys, values)}

        return {
            "pose": list(self.pose.as_tuple()),
            "p": self.p,
            "region_level": self.region_level,
            "shoulder_region": {"semi_axes": semis(self.shoulder_semi_axes), "bounded": self.bounded},
            "elbow_region": {"semi_axes": semis(self.elbow_semi_axes), "bounded": self.bounded,
                             "center": "-shoulder"},
            "shift_rule": "elbow distribution centred at (-d_phi_s, -d_theta_s)",
            "combiner": self.combiner,
            "empty": self.empty,
            "reason": self.reason,
        }


def applicable_set(model: NoticeabilityModel, pose: ArmPose, p: float, combiner: str = "mean") -> ApplicableSet:
    if combiner not in COMBINERS:
        raise ValueError(f"unknown combiner {combiner!r}")
    if 2.0 * p < 1.0:
        s_axes = tuple(float(v) for v in model.semi_axes("shoulder", pose, 2.0 * p))
        e_axes = tuple(float(v) for v in model.semi_axes("elbow", pose, 2.0 * p))
    else:
        s_axes = e_axes = (math.inf,) * 4
    base = combined_baseline(model, pose, combiner)
    reason = ""
    if p < base:
        reason = f"p={p} is below the combined zero-offset probability {base:.6g}"
    elif not 0 < p <= 1:
        reason = f"p={p} outside (0, 1]"
    return ApplicableSet(model, pose, float(p), combiner, s_axes, e_axes, reason)


def sample_applicable(aset: ApplicableSet, n: int, seed: int, batch: int = 4096) -> list[CompositeOffset]:
    """Rejection-sample ``n`` members from the bounding boxes of the two candidate regions.

    Unbounded regions are sampled within ``SAMPLING_EXTENT`` times the
    level-1 boxes.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if aset.empty:
        raise EmptySetError(aset.reason)
    rng = np.random.default_rng(seed)
    if aset.bounded:
        s_box, e_box = aset.shoulder_semi_axes, aset.elbow_semi_axes
    else:
        s_box = tuple(SAMPLING_EXTENT * float(v) for v in aset.model.semi_axes("shoulder", aset.pose, 1.0))
        e_box = tuple(SAMPLING_EXTENT * float(v) for v in aset.model.semi_axes("elbow", aset.pose, 1.0))
    spp, spn, stp, stn = s_box
    epp, epn, etp, etn = e_box
    out: list[CompositeOffset] = []
    rejected = 0
    while len(out) < n:
        sp = rng.uniform(-spn, spp, batch)
        st = rng.uniform(-stn, stp, batch)
        ep = rng.uniform(-epn, epp, batch) - sp
        et = rng.uniform(-etn, etp, batch) - st
        hits = np.flatnonzero(aset.contains_arrays(sp, st, ep, et))
        if hits.size == 0:
            rejected += batch
            if rejected >= MAX_REJECTIONS:
                raise EmptySetError(f"no member found after {rejected} rejected draws")
            continue
        rejected += int(hits[-1]) + 1 - hits.size
        for k in hits[: n - len(out)]:
            out.append(CompositeOffset.from_values(sp[k], st[k], ep[k], et[k]))
    return out


def estimate_shift_center(model: NoticeabilityModel, pose: ArmPose, shoulder: JointOffset2D,
                          elbow_cells: Sequence[tuple[JointOffset2D, float]], combiner: str = "mean",
                          span: float = 30.0) -> tuple[float, float]:
    """Centre of the elbow distribution that best explains composite cells under one shoulder offset.

    Least squares of ``p_hat ~ combine(F_s(s), F_e(e - c))`` over the centre
    ``c``, searched on successively finer grids.
    """
    if not elbow_cells:
        raise ValueError("no elbow cells given")
    e = np.array([c[0].as_tuple() for c in elbow_cells], dtype=float)
    obs = np.array([c[1] for c in elbow_cells], dtype=float)
    p_s = model.probability_2d("shoulder", pose, shoulder.d_phi, shoulder.d_theta)

    def sse(cx, cy):
        p_e = model.probability_2d("elbow", pose, e[:, 0] - cx[:, None], e[:, 1] - cy[:, None])
        return np.sum((combine(combiner, p_s, p_e) - obs) ** 2, axis=-1)

    center = np.zeros(2)
    ticks = np.arange(-span, span + 1.0, 2.0)
    step = 2.0
    while step > 1e-5:
        gx, gy = (g.ravel() for g in np.meshgrid(center[0] + ticks, center[1] + ticks, indexing="ij"))
        best = int(np.argmin(sse(gx, gy)))
        center = np.array([gx[best], gy[best]])
        step /= 5.0
        ticks = step * np.arange(-5, 6)
    return float(center[0]), float(center[1])


def _phase3_groups(dataset) -> dict[tuple, list]:
    from .dataset import aggregate

    groups: dict[tuple, list] = {}
    for cell in aggregate(dataset, phases=[3]):
        key = (cell.pose_index, tuple(round(v, 6) + 0.0 for v in cell.offset.shoulder.as_tuple()))
        groups.setdefault(key, []).append((cell.offset.elbow, cell.p_hat))
    return groups


def estimate_shift_gain(model: NoticeabilityModel, dataset, combiner: str = "mean",
                        bounds: tuple[float, float] = (-1.0, 3.0)) -> float:
    """Pooled gain ``k`` of the shift rule ``centre = -k * s`` over all phase-3 cells."""
    rows = {}
    for (pi, s_key), cells in _phase3_groups(dataset).items():
        for e, p_hat in cells:
            rows.setdefault(pi, []).append((*s_key, *e.as_tuple(), p_hat))
    if not rows:
        raise ValueError("dataset holds no phase-3 cells")
    prepared = []
    for pi, r in rows.items():
        arr = np.array(r)
        pose = dataset.pose_catalog[pi]
        p_s = model.probability_2d("shoulder", pose, arr[:, 0], arr[:, 1])
        prepared.append((pose, arr, p_s))

    def sse(ks):
        ks = np.atleast_1d(ks)[:, None]
        total = np.zeros(ks.shape[0])
        for pose, arr, p_s in prepared:
            p_e = model.probability_2d("elbow", pose, arr[:, 2] + ks * arr[:, 0], arr[:, 3] + ks * arr[:, 1])
            total += np.sum((combine(combiner, p_s, p_e) - arr[:, 4]) ** 2, axis=-1)
        return total

    grid = np.linspace(bounds[0], bounds[1], 81)
    k0 = grid[int(np.argmin(sse(grid)))]
    width = grid[1] - grid[0]
    res = optimize.minimize_scalar(lambda k: float(sse(k)[0]), bounds=(k0 - width, k0 + width),
                                   method="bounded", options={"xatol": 1e-8})
    return float(res.x)


def shift_fits(model: NoticeabilityModel, dataset, combiner: str = "mean") -> dict:
    """Free per-group elbow centres plus the pooled shift-rule gain for the phase-3 cells."""
    groups = []
    for (pi, s_key), cells in _phase3_groups(dataset).items():
        pose = dataset.pose_catalog[pi]
        try:
            center = estimate_shift_center(model, pose, JointOffset2D(*s_key), cells, combiner)
        except NoCrossingError as exc:
            log.warning("shift fit skipped for pose %d: %s", pi, exc)
            continue
        groups.append({"pose": list(pose.as_tuple()), "shoulder": list(s_key), "center": list(center)})
    gain = estimate_shift_gain(model, dataset, combiner) if groups else float("nan")
    return {"gain": gain, "groups": groups}
