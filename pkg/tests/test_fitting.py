import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avatar_offsets.catalog import DEFAULT_CATALOG
from avatar_offsets.dataset import PHASE1_VALUES
from avatar_offsets.errors import (
    DataError, DegenerateFitError, InsufficientDataError, ModelNotFittedError, NoCrossingError,
)
from avatar_offsets.fitting import (
    AxisQuadratic, EllipseLevelSet, NoticeabilityModel, ellipse_from_single_axis, fit_axis_quadratic,
    fit_pose_linear, invert_quadratic,
)
from avatar_offsets.oracle import SyntheticOracle, expected_model
from avatar_offsets.pose_geometry import ArmPose

XS = [float(v) for v in PHASE1_VALUES]


def test_exact_quadratic_recovered():
    q = fit_axis_quadratic(XS, [0.005 * x * x + 0.05 for x in XS])
    assert (q.a, q.b, q.c) == pytest.approx((0.005, 0.0, 0.05), abs=1e-12)
    assert q.rmse < 1e-12


def test_constant_data():
    q = fit_axis_quadratic(XS, [0.2] * len(XS))
    assert (q.a, q.b, q.c) == pytest.approx((0.0, 0.0, 0.2), abs=1e-12)
    assert q.rmse == pytest.approx(0.0, abs=1e-12)


def test_concave_data_refit_as_line():
    q = fit_axis_quadratic(XS, [0.5 + 0.01 * x - 0.001 * x * x for x in XS])
    assert q.a == 0.0
    assert q.b == pytest.approx(0.01)


def test_too_few_offsets():
    with pytest.raises(InsufficientDataError):
        fit_axis_quadratic([0, 3, 3], [0.1, 0.2, 0.2])


def test_invert_symmetric():
    lv = invert_quadratic(AxisQuadratic(0.005, 0.0, 0.05), 0.5)
    assert lv.neg == pytest.approx(-math.sqrt(90), abs=1e-12)
    assert lv.pos == pytest.approx(math.sqrt(90), abs=1e-12)
    assert not lv.asymmetric


def test_invert_at_baseline_fails():
    with pytest.raises(NoCrossingError):
        invert_quadratic(AxisQuadratic(0.005, 0.0, 0.05), 0.05)


def test_invert_linear_mirrors_crossing():
    lv = invert_quadratic(AxisQuadratic(0.0, 0.02, 0.1), 0.5)
    assert (lv.neg, lv.pos, lv.asymmetric) == (pytest.approx(-20), pytest.approx(20), True)


def test_invert_flat_fails():
    with pytest.raises(NoCrossingError):
        invert_quadratic(AxisQuadratic(0.0, 0.0, 0.1), 0.5)


@given(st.floats(1e-4, 0.01), st.floats(-0.02, 0.02), st.floats(0.0, 0.1), st.floats(0.15, 0.95))
def test_invert_round_trip(a, b, c, p):
    q = AxisQuadratic(a, b, c)
    lv = invert_quadratic(q, p)
    assert lv.neg <= 0 <= lv.pos
    assert q.raw(lv.pos) == pytest.approx(p, abs=1e-9)
    assert q.raw(lv.neg) == pytest.approx(p, abs=1e-9)


def test_pose_linear_constant():
    fit = fit_pose_linear(DEFAULT_CATALOG, [7.0] * len(DEFAULT_CATALOG))
    assert fit.coef == pytest.approx((0, 0, 0, 0, 7.0), abs=1e-9)


def test_pose_linear_exact_recovery():
    coef = np.array([0.1, -0.05, 0.02, 0.0, 3.0])
    vals = [float(coef[:4] @ p.as_array() + coef[4]) for p in DEFAULT_CATALOG]
    fit = fit_pose_linear(DEFAULT_CATALOG, vals)
    np.testing.assert_allclose(fit.coef, coef, atol=1e-9)
    assert fit.residual < 1e-9
    assert fit.predict(ArmPose(1, 2, 3, 4)) == pytest.approx(0.1 - 0.1 + 0.06 + 3.0)


def test_pose_linear_needs_five_poses():
    with pytest.raises(InsufficientDataError):
        fit_pose_linear(DEFAULT_CATALOG[:4], [1, 2, 3, 4])


def test_pose_linear_degenerate_design():
    poses = [ArmPose(10 * k, 10 * k, 0, 0) for k in range(6)]
    with pytest.raises(DegenerateFitError):
        fit_pose_linear(poses, range(6))


def test_ellipse_boundary_and_gauge():
    ls = ellipse_from_single_axis(invert_quadratic(AxisQuadratic(0.005, 0, 0.05), 0.5),
                                  invert_quadratic(AxisQuadratic(0.01, 0, 0.05), 0.5), 0.5)
    assert ls.contains(0, 0)
    for d in (0, 37, 90, 200, 315):
        x, y = ls.boundary_point(d)
        assert float(ls.gauge(x, y)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        EllipseLevelSet(1, 0, 1, 1)


@pytest.fixture(scope="module")
def exact():
    oracle = SyntheticOracle(lapse=0.0)
    return oracle, expected_model(oracle)


def test_probability_at_origin_is_baseline(exact):
    _, model = exact
    pose = DEFAULT_CATALOG[0]
    assert model.probability_2d("shoulder", pose, 0.0, 0.0) == pytest.approx(model.baseline("shoulder", pose))


def test_probability_on_half_level_boundary(exact):
    _, model = exact
    pose = DEFAULT_CATALOG[2]
    ls = model.level_set("elbow", pose, 0.5)
    for d in range(0, 360, 30):
        assert model.probability_2d("elbow", pose, *ls.boundary_point(d)) == pytest.approx(0.5, abs=1e-6)


def test_probability_beyond_level_one(exact):
    _, model = exact
    assert model.probability_2d("shoulder", DEFAULT_CATALOG[0], 80.0, 80.0) == 1.0


def test_cross_pose_model_generalises(exact):
    # The synthetic saturation offsets are linear in the pose, so the
    # cross-pose linear model is exact at poses outside the catalog.
    oracle, model = exact
    pose = ArmPose(40, 80, 20, 60)
    assert model.pose_index(pose) is None
    x, y = np.meshgrid(np.linspace(-20, 20, 9), np.linspace(-20, 20, 9))
    for joint in ("shoulder", "elbow"):
        np.testing.assert_allclose(model.probability_2d(joint, pose, x, y),
                                   oracle.joint_probability(joint, pose, x, y), atol=1e-9)


@settings(max_examples=50)
@given(st.floats(0, 359), st.floats(0.0, 30.0), st.floats(0.0, 30.0))
def test_probability_monotone_along_rays(exact, direction, r1, r2):
    _, model = exact
    lo, hi = sorted((r1, r2))
    dx, dy = math.cos(math.radians(direction)), math.sin(math.radians(direction))
    p_lo = model.probability_2d("elbow", DEFAULT_CATALOG[1], lo * dx, lo * dy)
    p_hi = model.probability_2d("elbow", DEFAULT_CATALOG[1], hi * dx, hi * dy)
    assert p_lo <= p_hi + 1e-9


def test_pose_linear_export(exact):
    _, model = exact
    fits = model.pose_linear(0.5)
    assert set(fits) == {(j, a, s) for j in ("shoulder", "elbow") for a in ("phi", "theta") for s in ("pos", "neg")}
    assert all(f.residual < 1e-9 for f in fits.values())


def test_model_json_round_trip(tmp_path, exact):
    _, model = exact
    path = tmp_path / "m.json"
    model.save(path)
    data = json.loads(path.read_text())
    assert data["schema_version"] == 1
    assert "0.5" in data["pose_linear"]
    loaded = NoticeabilityModel.load(path)
    assert loaded.quadratics == model.quadratics
    assert loaded.catalog == model.catalog


def test_model_json_errors(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(DataError):
        NoticeabilityModel.load(path)
    path.write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(DataError):
        NoticeabilityModel.load(path)


def test_missing_joint_fit(exact):
    _, model = exact
    partial = NoticeabilityModel(model.catalog[:1], {k: v for k, v in model.quadratics.items()
                                                      if k[0] == 0 and k[1] == "shoulder"})
    with pytest.raises(ModelNotFittedError):
        partial.probability_2d("elbow", model.catalog[0], 1.0, 1.0)
    with pytest.raises(ValueError):
        partial.probability_2d("wrist", model.catalog[0], 1.0, 1.0)


def test_fit_model_diagnostics(fitted_model):
    assert len(fitted_model.catalog) == len(DEFAULT_CATALOG)
    assert len(fitted_model.quadratics) == 4 * len(DEFAULT_CATALOG)
    assert 0.0 <= fitted_model.diagnostics["phase1_mean_rmse"] < 0.1
    assert set(fitted_model.diagnostics["phase2_rmse"]) == {f"{i}/{j}" for i in range(4) for j in ("elbow", "shoulder")}
