import math
import random

import numpy as np
import pytest

from avatar_offsets.catalog import DEFAULT_CATALOG, EXTREME_POSES, select_representative_poses
from avatar_offsets.dataset import NoticeabilityDataset, phase1_plan, write_trials
from avatar_offsets.oracle import (
    SyntheticOracle, answer_plan, evaluate_recovery, expected_model, oracle_respond, simulate_study,
)
from avatar_offsets.pose_geometry import ArmPose, CompositeOffset

POSE = DEFAULT_CATALOG[0]


def test_probability_bounds_and_floor():
    oracle = SyntheticOracle(fp=0.03, lapse=0.05)
    assert oracle.probability(POSE, CompositeOffset()) == pytest.approx(0.03)
    assert oracle.probability(POSE, CompositeOffset.from_values(90, 90, 0, 0)) == pytest.approx(0.95)


def test_saturated_offset_always_noticed():
    oracle = SyntheticOracle(lapse=0.0)
    rng = np.random.default_rng(0)
    assert all(oracle_respond(oracle, POSE, CompositeOffset.from_values(80, 0, 0, 0), rng) for _ in range(500))


def test_zero_offset_never_noticed_without_false_positives():
    oracle = SyntheticOracle(fp=0.0)
    rng = np.random.default_rng(0)
    assert not any(oracle_respond(oracle, POSE, CompositeOffset(), rng) for _ in range(500))


def test_monte_carlo_frequency_within_three_sigma():
    oracle = SyntheticOracle()
    off = CompositeOffset.from_values(8, -5, 0, 0)
    g = oracle.probability(POSE, off)
    rng = np.random.default_rng(11)
    n = 10_000
    hits = sum(oracle_respond(oracle, POSE, off, rng) for _ in range(n))
    assert abs(hits / n - g) <= 3 * math.sqrt(g * (1 - g) / n)


def test_invalid_rates_rejected():
    with pytest.raises(ValueError):
        SyntheticOracle(fp=0.2)
    with pytest.raises(ValueError):
        SyntheticOracle(response="coin")


def test_shift_rule_in_oracle():
    oracle = SyntheticOracle(fp=0.0, lapse=0.0)
    s = (6.0, -4.0)
    centred = oracle.probability(POSE, CompositeOffset.from_values(*s, -s[0], -s[1]))
    assert centred == pytest.approx(0.5 * oracle.joint_probability("shoulder", POSE, *s))
    no_shift = SyntheticOracle(fp=0.0, lapse=0.0, shift=False)
    assert no_shift.probability(POSE, CompositeOffset.from_values(*s, -s[0], -s[1])) > centred


def test_simulate_counts(default_dataset):
    counts = {}
    for r in default_dataset.records:
        counts[r.phase] = counts.get(r.phase, 0) + 1
    assert counts == {1: 12 * 440, 2: 12 * 960, 3: 12 * 1024}


def test_simulate_deterministic(tmp_path):
    a = simulate_study(SyntheticOracle(), n_participants=2, seed=9)
    b = simulate_study(SyntheticOracle(), n_participants=2, seed=9)
    write_trials(a, tmp_path / "a.csv")
    write_trials(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a != simulate_study(SyntheticOracle(), n_participants=2, seed=10)


def test_simulate_needs_participants():
    with pytest.raises(ValueError):
        simulate_study(SyntheticOracle(), n_participants=0)


@pytest.mark.parametrize("response", ["criterion", "bernoulli", "threshold"])
def test_response_models_answer_every_task(response):
    plan = phase1_plan([POSE], 0)
    recs = answer_plan(SyntheticOracle(response=response), plan, 0, 12, seed=1)
    assert len(recs) == 44


def test_noiseless_recovery_below_half_degree():
    # Twelve deterministic participants still quantize each cell to k/12, so
    # the per-axis errors scatter around a mean well below half a degree.
    oracle = SyntheticOracle(fp=0.0, lapse=0.0, response="threshold")
    report = evaluate_recovery(simulate_study(oracle, n_participants=12, seed=0), oracle)
    assert report.mean_half_level_error < 0.5
    assert report.mean_shift_error < 0.5
    assert all(v >= 0 for v in report.ellipse_errors.values())


def test_exact_cells_recover_everything():
    oracle = SyntheticOracle(fp=0.0, lapse=0.0, response="threshold")
    dataset = simulate_study(oracle, n_participants=2, seed=0)
    report = evaluate_recovery(dataset, oracle, expected_model(oracle))
    assert max(report.half_level_errors.values()) < 1e-9
    assert max(report.ellipse_errors.values()) < 1e-9


def test_recovery_invariant_to_participant_relabeling(default_dataset, default_oracle, fitted_model):
    mapping = {f"P{k + 1:02d}": f"X{11 - k}" for k in range(12)}
    relabeled = NoticeabilityDataset(
        [type(r)(mapping[r.participant], r.phase, r.pose, r.offset, r.noticed) for r in default_dataset.records],
        list(default_dataset.pose_catalog))
    a = evaluate_recovery(default_dataset, default_oracle, fitted_model).to_json()
    b = evaluate_recovery(relabeled, default_oracle).to_json()
    assert a == b


def test_chained_protocol_runs():
    ds = simulate_study(SyntheticOracle(), n_participants=3, seed=2, chained=True)
    assert sum(r.phase == 3 for r in ds.records) == 3 * 1024


# -- representative poses --------------------------------------------------

def _blob(center, n, rng, spread=2.0):
    return [ArmPose(*(np.clip(np.asarray(center) + rng.normal(0, spread, 4), [-179, 0, -179, 0], [180, 180, 180, 180])))
            for _ in range(n)]


def test_single_cluster_medoid():
    rng = np.random.default_rng(0)
    sample = _blob((30, 60, 10, 45), 15, rng)
    cat = select_representative_poses(sample, 1, seed=0)
    assert cat.poses[0] in sample
    assert len(cat) == 5
    assert cat.provenance == ("clustered",) + ("extreme",) * 4


def test_two_blobs_one_medoid_each():
    rng = np.random.default_rng(1)
    a = _blob((30, 60, 10, 45), 20, rng)
    b = _blob((-120, 150, 90, 120), 20, rng)
    cat = select_representative_poses(a + b, 2, seed=3)
    medoids = cat.poses[:2]
    assert sum(m in a for m in medoids) == 1 and sum(m in b for m in medoids) == 1


def test_extremes_always_present():
    rng = np.random.default_rng(2)
    sample = _blob((45, 90, 0, 30), 10, rng) + list(EXTREME_POSES[:2])
    cat = select_representative_poses(sample, 4, seed=0)
    for e in EXTREME_POSES:
        assert any(e.close_to(p) for p in cat.poses)


def test_order_invariance():
    rng = np.random.default_rng(4)
    sample = _blob((30, 60, 10, 45), 25, rng) + _blob((-90, 120, 45, 90), 25, rng)
    shuffled = list(sample)
    random.Random(7).shuffle(shuffled)
    assert select_representative_poses(sample, 3, seed=5) == select_representative_poses(shuffled, 3, seed=5)


def test_k_out_of_range():
    with pytest.raises(ValueError):
        select_representative_poses(list(DEFAULT_CATALOG[:3]), 4)
    with pytest.raises(ValueError):
        select_representative_poses(list(DEFAULT_CATALOG), 0)
