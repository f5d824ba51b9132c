import csv
import json
import subprocess
import sys

import pytest

from avatar_offsets.cli import build_parser, main
from avatar_offsets.dataset import aggregate, read_trials
from avatar_offsets.fitting import NoticeabilityModel

SUBCOMMANDS = ["plan", "simulate", "fit", "query-prob", "applicable-set", "amplify", "rula", "cluster-poses",
               "eval-recovery"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--seed", "1", "--participants", "6", "--out", str(root / "t.csv")]) == 0
    assert main(["fit", "--trials", str(root / "t.csv"), "--out", str(root / "m.json")]) == 0
    return root


def test_help_lists_every_subcommand(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for name in SUBCOMMANDS:
        assert name in out
    for name in SUBCOMMANDS:
        assert main([name, "--help"]) == 0


def test_unknown_subcommand_suggests(capsys):
    assert main(["simulat"]) == 1
    assert "simulate" in capsys.readouterr().err


def test_missing_command_is_usage_error():
    assert main([]) == 1


def test_bad_flag_is_usage_error(capsys):
    assert main(["query-prob", "--model", "m.json", "--pose", "1,2", "--offset", "0,0,0,0"]) == 1
    assert main(["applicable-set", "--model", "m.json", "--pose", "0,0,0,0", "--p", "1.5"]) == 1


def test_missing_file_is_data_error(tmp_path):
    assert main(["fit", "--trials", str(tmp_path / "none.csv"), "--out", str(tmp_path / "m.json")]) == 2


def test_malformed_trials_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("participant,phase\n1,2\n")
    assert main(["fit", "--trials", str(bad), "--out", str(tmp_path / "m.json")]) == 2
    assert "line 1" in capsys.readouterr().err


def test_plan_row_count(tmp_path):
    poses = tmp_path / "catalog.csv"
    poses.write_text("phi_s,theta_s,phi_e,theta_e\n30,60,10,45\n60,45,90,60\n-20,30,-45,90\n")
    out = tmp_path / "plan.csv"
    assert main(["plan", "--phase", "1", "--poses", str(poses), "--seed", "7", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 44 * 3


def test_plan_phase3_from_model(tmp_path, workdir):
    out = tmp_path / "p3.csv"
    poses = tmp_path / "catalog.csv"
    poses.write_text("30,60,10,45\n")
    assert main(["plan", "--phase", "3", "--poses", str(poses), "--model", str(workdir / "m.json"),
                 "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 256


def test_query_prob_prints_probability(workdir, capsys):
    assert main(["query-prob", "--model", str(workdir / "m.json"), "--pose", "30,60,10,45",
                 "--offset", "5,0,0,0"]) == 0
    p = float(capsys.readouterr().out.strip())
    assert 0.0 <= p <= 1.0


def test_query_prob_reproduces_phase1_cells(workdir, capsys):
    model = NoticeabilityModel.load(workdir / "m.json")
    ds = read_trials(workdir / "t.csv")
    rmse = model.quadratics[(0, "shoulder", "phi")].rmse
    cells = [c for c in aggregate(ds, phases=[1]) if c.pose_index == 0 and c.offset.shoulder.d_theta == 0
             and c.offset.elbow.strength == 0]
    errors = []
    for cell in cells:
        pose = ",".join(repr(v) for v in ds.pose_catalog[0].as_tuple())
        off = ",".join(repr(v) for v in cell.offset.as_tuple())
        assert main(["query-prob", "--model", str(workdir / "m.json"), f"--pose={pose}", f"--offset={off}"]) == 0
        errors.append(float(capsys.readouterr().out) - cell.p_hat)
    assert (sum(e * e for e in errors) / len(errors)) ** 0.5 <= 2 * rmse + 1e-9


def test_query_prob_grid(workdir, tmp_path):
    grid = tmp_path / "grid.csv"
    assert main(["query-prob", "--model", str(workdir / "m.json"), "--pose", "30,60,10,45", "--offset", "0,0,0,0",
                 "--grid-out", str(grid), "--grid-n", "5"]) == 0
    rows = list(csv.reader(grid.open()))
    assert rows[0] == ["d_phi", "d_theta", "p"]
    assert len(rows) == 26


def test_applicable_set_json(workdir, tmp_path):
    out = tmp_path / "set.json"
    assert main(["applicable-set", "--model", str(workdir / "m.json"), "--pose", "30,60,10,45", "--p", "0.3",
                 "--samples", "10", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    for key in ("pose", "p", "shoulder_region", "shift_rule", "combiner", "n_samples", "samples"):
        assert key in data
    assert data["n_samples"] == len(data["samples"]) == 10


def test_applicable_set_below_baseline_reports_empty(workdir, capsys):
    assert main(["applicable-set", "--model", str(workdir / "m.json"), "--pose", "30,60,10,45", "--p", "0.001"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["empty"] and data["n_samples"] == 0 and data["reason"]


def test_amplify(workdir, tmp_path):
    traj = tmp_path / "traj.csv"
    traj.write_text("t,phi_s,theta_s,phi_e,theta_e\n0,0,0,0,0\n0.1,90,90,90,90\n")
    out = tmp_path / "amp.csv"
    assert main(["amplify", "--model", str(workdir / "m.json"), "--extreme", "90,90,90,90", "--p", "0.75",
                 "--delta-s", "0.5", "--in", str(traj), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(rows[0][k]) for k in ("off_phi_s", "off_theta_s", "off_phi_e", "off_theta_e")] == [0, 0, 0, 0]
    assert float(rows[1]["v_phi_s"]) > 90


def test_amplify_non_monotone_is_data_error(workdir, tmp_path, capsys):
    traj = tmp_path / "traj.csv"
    traj.write_text("t,phi_s,theta_s,phi_e,theta_e\n0,0,0,0,0\n0,1,1,1,1\n")
    assert main(["amplify", "--model", str(workdir / "m.json"), "--extreme", "90,90,90,90",
                 "--in", str(traj), "--out", str(tmp_path / "o.csv")]) == 2
    assert "frame 1" in capsys.readouterr().err


def test_amplify_zero_extreme_is_data_error(workdir, tmp_path):
    traj = tmp_path / "traj.csv"
    traj.write_text("t,phi_s,theta_s,phi_e,theta_e\n0,0,0,0,0\n")
    assert main(["amplify", "--model", str(workdir / "m.json"), "--extreme", "0,0,0,0",
                 "--in", str(traj), "--out", str(tmp_path / "o.csv")]) == 2


def test_rula(capsys):
    assert main(["rula", "--pose", "0,120,0,180", "--joints"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["rula"] == 6
    assert data["joints"]["shoulder"] == [0.0, 0.0, 0.0]


def test_cluster_poses(tmp_path):
    sample = tmp_path / "sample.csv"
    sample.write_text("\n".join(f"{10 + i},{40 + i},{5 * i},{30 + i}" for i in range(12)) + "\n")
    out = tmp_path / "cat.csv"
    assert main(["cluster-poses", "--poses", str(sample), "--k", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6
    assert [r["provenance"] for r in rows].count("extreme") == 4


def test_eval_recovery_on_file(workdir, capsys):
    assert main(["eval-recovery", "--trials", str(workdir / "t.csv")]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["summary"]["mean_half_level_error"] >= 0


def test_log_level_env(monkeypatch, tmp_path):
    monkeypatch.setenv("OFFSET_MODEL_LOG", "debug")
    assert main(["plan", "--phase", "2", "--out", str(tmp_path / "p.csv")]) == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "avatar_offsets", "rula", "--pose", "0,10,0,100"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["rula"] == 2


def test_parser_builds():
    assert build_parser().prog == "avatar-offsets"
