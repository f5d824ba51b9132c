"""Command-line interface.

Exit status is 0 on success, 1 on a usage error and 2 when an input file or
model cannot be used. Set ``OFFSET_MODEL_LOG`` to ``error``, ``info`` or
``debug`` to control logging.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import json
import logging
import os
import sys

import numpy as np

from . import amplification as amp
from .catalog import DEFAULT_CATALOG, select_representative_poses
from .dataset import (
    NoticeabilityDataset, phase1_plan, phase2_plan, phase3_plan, read_poses, read_trials, write_trials,
)
from .errors import (
    DataError, DegenerateFitError, EmptySetError, InsufficientDataError, ModelNotFittedError, NoCrossingError,
)
from .fitting import NoticeabilityModel, fit_model
from .offset_model import COMBINERS, applicable_set, composite_probability, sample_applicable, shift_fits
from .oracle import (
    PHASE23_POSES, RESPONSE_MODELS, SyntheticOracle, evaluate_recovery, fitted_shoulder_offsets,
    simulate_study, true_shoulder_offsets,
)
from .pose_geometry import ArmPose, CompositeOffset, LimbLengths, forward_kinematics, rula_arm_score

log = logging.getLogger("avatar_offsets")

DATA_ERRORS = (DataError, OSError, InsufficientDataError, NoCrossingError, DegenerateFitError,
               ModelNotFittedError, EmptySetError, amp.ConfigurationError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _pose(text: str) -> ArmPose:
    try:
        return ArmPose.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _offset(text: str) -> CompositeOffset:
    try:
        return CompositeOffset.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < p <= 1:
        raise argparse.ArgumentTypeError(f"probability {p} outside (0, 1]")
    return p


def _oracle(args) -> SyntheticOracle:
    return SyntheticOracle(fp=args.fp, lapse=args.lapse, shift=not args.no_shift,
                           combiner=args.combiner, response=args.response)


def _write_json(data, path) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# -- subcommands ----------------------------------------------------------

def cmd_plan(args) -> int:
    poses = read_poses(args.poses) if args.poses else list(DEFAULT_CATALOG)
    if args.phase == 1:
        plan = phase1_plan(poses, args.seed)
    elif args.phase == 2:
        plan = phase2_plan(poses, args.seed)
    else:
        if args.model:
            model = NoticeabilityModel.load(args.model)
            shoulder = [fitted_shoulder_offsets(model, p) for p in poses]
        else:
            shoulder = [true_shoulder_offsets(SyntheticOracle(), p) for p in poses]
        plan = phase3_plan(poses, shoulder, args.seed)
    plan.write_csv(args.out if args.out else sys.stdout.fileno())
    log.info("phase %d plan: %d tasks", args.phase, len(plan))
    return 0


def cmd_simulate(args) -> int:
    catalog = read_poses(args.catalog) if args.catalog else list(DEFAULT_CATALOG)
    ds = simulate_study(_oracle(args), catalog, args.participants, args.seed, chained=args.chained)
    write_trials(ds, args.out)
    log.info("wrote %d trials to %s", len(ds), args.out)
    return 0


def cmd_fit(args) -> int:
    ds = read_trials(args.trials)
    model = fit_model(ds)
    if any(r.phase == 3 for r in ds.records):
        model.diagnostics["shift_fits"] = shift_fits(model, ds, args.combiner)
    model.save(args.out)
    log.info("fitted %d poses; phase-1 rmse %.4f", len(model.catalog), model.diagnostics["phase1_mean_rmse"])
    return 0


def cmd_query_prob(args) -> int:
    model = NoticeabilityModel.load(args.model)
    print(repr(composite_probability(model, args.pose, args.offset, args.combiner)))
    if args.grid_out:
        joint = args.grid_joint
        ticks = np.linspace(-args.grid_span, args.grid_span, args.grid_n)
        gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
        p = model.probability_2d(joint, args.pose, gx.ravel(), gy.ravel())
        with open(args.grid_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d_phi", "d_theta", "p"])
            for x, y, v in zip(gx.ravel(), gy.ravel(), p):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    return 0


def cmd_applicable_set(args) -> int:
    model = NoticeabilityModel.load(args.model)
    aset = applicable_set(model, args.pose, args.p, args.combiner)
    out = aset.to_json()
    samples = [] if aset.empty or args.samples == 0 else sample_applicable(aset, args.samples, args.seed)
    out["n_samples"] = len(samples)
    out["samples"] = [list(s.as_tuple()) for s in samples]
    _write_json(out, args.out)
    return 0


def cmd_amplify(args) -> int:
    model = NoticeabilityModel.load(args.model)
    config = amp.configure(model, args.extreme, args.p, args.delta_s, args.combiner)
    frames = amp.amplify_trajectory(config, amp.read_trajectory(args.inp))
    amp.write_amplified(frames, args.out)
    log.info("amplified %d frames", len(frames))
    return 0


def cmd_rula(args) -> int:
    poses = [args.pose] if args.pose else read_poses(args.poses)
    for p in poses:
        out = {"pose": list(p.as_tuple()), "rula": rula_arm_score(p)}
        if args.joints:
            out["joints"] = forward_kinematics(p, LimbLengths(args.upper_arm, args.forearm)).to_json()
        print(json.dumps(out, sort_keys=True))
    return 0


def cmd_cluster_poses(args) -> int:
    cat = select_representative_poses(read_poses(args.poses), args.k, args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phi_s", "theta_s", "phi_e", "theta_e", "label", "provenance"])
        for p, label, prov in zip(cat.poses, cat.labels, cat.provenance):
            w.writerow([*map(repr, p.as_tuple()), label, prov])
    return 0


def cmd_eval_recovery(args) -> int:
    oracle = _oracle(args)
    if args.trials:
        reports = {"file": evaluate_recovery(read_trials(args.trials), oracle).to_json()}
    else:
        reports = {}
        for s in range(args.seed, args.seed + args.n_seeds):
            ds = simulate_study(oracle, DEFAULT_CATALOG, args.participants, s, chained=args.chained)
            reports[str(s)] = evaluate_recovery(ds, oracle).to_json()
    summary = {
        key: float(np.mean([r[key] for r in reports.values()]))
        for key in ("mean_half_level_error", "mean_shift_error", "mean_free_center_error", "phase1_mean_rmse")
    }
    _write_json({"summary": summary, "runs": reports}, args.out)
    return 0


# -- parser ---------------------------------------------------------------

def _add_oracle_args(p) -> None:
    p.add_argument("--fp", type=float, default=0.02, help="false-positive rate of the synthetic users")
    p.add_argument("--lapse", type=float, default=0.02, help="lapse rate (ceiling is 1 - lapse)")
    p.add_argument("--response", choices=RESPONSE_MODELS, default="stratified", help="participant response model")
    p.add_argument("--no-shift", action="store_true", help="disable the elbow shift rule in the oracle")
    p.add_argument("--chained", action="store_true",
                   help="take phase-3 shoulder offsets from a phase-1 fit instead of the oracle's truth")
    p.add_argument("--participants", type=int, default=12, help="number of simulated participants")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avatar-offsets", description="Noticeability model of user-avatar arm offsets.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("plan", help="write a sampling plan CSV")
    p.add_argument("--phase", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--poses", help="pose CSV (default: built-in catalog)")
    p.add_argument("--model", help="phase 3: take 30%% shoulder offsets from this model instead of the synthetic truth")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate a study with synthetic participants")
    p.add_argument("--out", required=True, help="trials CSV to write")
    p.add_argument("--catalog", help="pose CSV (default: built-in catalog)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--combiner", choices=COMBINERS, default="mean")
    _add_oracle_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model from a trials CSV")
    p.add_argument("--trials", required=True)
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--combiner", choices=COMBINERS, default="mean", help="combiner used for the shift fits")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("query-prob", help="noticing probability of a composite offset")
    p.add_argument("--model", required=True)
    p.add_argument("--pose", type=_pose, required=True, help='"phi_s,theta_s,phi_e,theta_e"')
    p.add_argument("--offset", type=_offset, required=True, help='"d_phi_s,d_theta_s,d_phi_e,d_theta_e"')
    p.add_argument("--combiner", choices=COMBINERS, default="mean")
    p.add_argument("--grid-out", help="also write a single-joint probability grid CSV (d_phi,d_theta,p)")
    p.add_argument("--grid-joint", choices=("shoulder", "elbow"), default="shoulder")
    p.add_argument("--grid-span", type=float, default=24.0, help="grid half-width in degrees")
    p.add_argument("--grid-n", type=int, default=49, help="grid points per axis")
    p.set_defaults(func=cmd_query_prob)

    p = sub.add_parser("applicable-set", help="composite offsets with noticing probability at most p")
    p.add_argument("--model", required=True)
    p.add_argument("--pose", type=_pose, required=True)
    p.add_argument("--p", type=_probability, required=True)
    p.add_argument("--combiner", choices=COMBINERS, default="mean")
    p.add_argument("--samples", type=int, default=100, help="number of member samples to include")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON output (default: stdout)")
    p.set_defaults(func=cmd_applicable_set)

    p = sub.add_parser("amplify", help="amplify a pose trajectory CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--extreme", type=_pose, required=True)
    p.add_argument("--p", type=_probability, default=0.75)
    p.add_argument("--delta-s", type=float, default=0.5, help="shoulder weight; the elbow gets 1 - delta_s")
    p.add_argument("--combiner", choices=COMBINERS, default="mean")
    p.add_argument("--in", dest="inp", required=True, help="trajectory CSV t,phi_s,theta_s,phi_e,theta_e")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_amplify)

    p = sub.add_parser("rula", help="upper-limb RULA proxy score")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--pose", type=_pose)
    g.add_argument("--poses", help="pose CSV")
    p.add_argument("--joints", action="store_true", help="include joint positions")
    p.add_argument("--upper-arm", type=float, default=0.3, help="upper-arm length in metres")
    p.add_argument("--forearm", type=float, default=0.25, help="forearm length in metres")
    p.set_defaults(func=cmd_rula)

    p = sub.add_parser("cluster-poses", help="select representative poses by k-medoids")
    p.add_argument("--poses", required=True, help="pose sample CSV")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster_poses)

    p = sub.add_parser("eval-recovery", help="simulate, fit and compare against the synthetic truth")
    p.add_argument("--trials", help="evaluate this trials CSV instead of simulating")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--combiner", choices=COMBINERS, default="mean")
    p.add_argument("--out", help="JSON report (default: stdout)")
    _add_oracle_args(p)
    p.set_defaults(func=cmd_eval_recovery)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("OFFSET_MODEL_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    names = list(parser._subparsers._group_actions[0].choices)
    if argv and not argv[0].startswith("-") and argv[0] not in names:
        hint = difflib.get_close_matches(argv[0], names, n=1)
        msg = f"unknown command {argv[0]!r}"
        print(f"error: {msg}" + (f"; did you mean {hint[0]!r}?" if hint else f"; choose from {', '.join(names)}"),
              file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
