"""Command-line front end: tracking campaigns, Fisher sweeps, and CRB runs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .combiners import combiner_fd, combiner_qom, combiner_random, combiner_svd_pe
from .dynamics import ctrv_transition
from .errors import ConfigError, NfTrackError
from .geometry import ArrayConfig, Pose, channel_derivatives
from .harness import ScenarioConfig, load_config, parse_scheme, run_campaign
from .information import avg_fisher, bayesian_fim_init, bayesian_fim_step, bcrb, fisher_scaling_bounds
from .observation import generate_pilot, observation_jacobian
from .rng import stream


def _add_common(parser):
    parser.add_argument("--config", required=True, help="scenario config (JSON)")
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--nrf", type=int, default=None)
    parser.add_argument("--pm-dbm", type=float, default=None)
    parser.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nftrack",
        description="Near-field pose tracking simulator with hybrid-array analog combining.",
    )
    parser.add_argument("--version", action="version", version=f"nftrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="run a Monte Carlo tracking campaign")
    _add_common(track)
    track.add_argument(
        "--schemes",
        default="fd,rand,svd_pe,qom",
        help="comma-separated list: fd, rand, svd_pe, qom, mo:rand, mo:svd_pe, mo:qom",
    )

    fisher = sub.add_parser("fisher", help="average-Fisher-information sweeps")
    _add_common(fisher)
    fisher.add_argument(
        "--sweep",
        required=True,
        help="nb:<start>:<stop>:<points> | nm:<start>:<stop>:<points> | pose-grid <file>",
        nargs="+",
    )

    crb = sub.add_parser("crb", help="Bayesian CRB trace along the nominal trajectory")
    _add_common(crb)
    crb.add_argument("--policy", default="fd", choices=["fd", "rand", "svd_pe", "qom"])
    crb.add_argument("--samples", type=int, default=100)
    return parser


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, n_trials=args.trials)
    if args.steps is not None:
        cfg = replace(cfg, k_steps=args.steps)
    if args.pm_dbm is not None:
        cfg = replace(cfg, p_m_dbm=args.pm_dbm)
    if args.nrf is not None:
        spec = replace(cfg.combiner, n_rf=args.nrf)
        cfg = cfg.with_combiner(spec)
    return cfg


def _cmd_track(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    n_rf = cfg.combiner.n_rf
    schemes = [
        parse_scheme(tok, n_rf, cfg.array.n_b, cfg.combiner.mo_iters)
        for tok in args.schemes.split(",")
        if tok.strip()
    ]
    result = run_campaign(cfg, schemes, threads=max(1, args.threads))
    result.to_csv(args.out)
    return 0


def _parse_grid(token: str) -> np.ndarray:
    _, start, stop, points = token.split(":")
    grid = np.linspace(float(start), float(stop), int(points))
    return np.floor(grid).astype(int)


def _fisher_row(cfg: ScenarioConfig, array: ArrayConfig, pose: Pose):
    derivs = channel_derivatives(pose, array)
    fd = combiner_fd(array)
    bar = avg_fisher(derivs, fd, cfg.p_m_watts, cfg.noise_power_watts, array.n_m)
    try:
        pos_bound, orient_bound = fisher_scaling_bounds(
            pose, array, cfg.p_m_watts, cfg.noise_power_watts
        )
    except NfTrackError:
        pos_bound, orient_bound = float("nan"), float("nan")
    return bar, pos_bound, orient_bound


def _cmd_fisher(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    pose = cfg.initial_state.pose
    sweep = args.sweep
    rows = []
    if sweep[0].startswith("nb:") or sweep[0].startswith("nm:"):
        axis = sweep[0][:2]
        for val in _parse_grid(sweep[0]):
            arr = cfg.array
            array = ArrayConfig(
                n_b=int(val) if axis == "nb" else arr.n_b,
                n_m=int(val) if axis == "nm" else arr.n_m,
                carrier_freq=arr.carrier_freq,
            )
            bar, pb, ob = _fisher_row(cfg, array, pose)
            rows.append([axis, int(val), pose.x, pose.y, pose.psi, bar.f_x, bar.f_y, bar.f_psi, pb, ob])
    elif sweep[0] == "pose-grid":
        if len(sweep) < 2:
            raise ConfigError("pose-grid sweep needs a file argument")
        with open(sweep[1]) as fh:
            poses = json.load(fh)
        for entry in poses:
            p = Pose(float(entry["x_m"]), float(entry["y_m"]), float(entry["psi_rad"]))
            bar, pb, ob = _fisher_row(cfg, cfg.array, p)
            rows.append(["pose", 0, p.x, p.y, p.psi, bar.f_x, bar.f_y, bar.f_psi, pb, ob])
    else:
        raise ConfigError(f"unknown sweep specification {sweep!r}")

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["axis", "value", "x_m", "y_m", "psi_rad",
             "fbar_x", "fbar_y", "fbar_psi", "position_bound", "orientation_bound"]
        )
        for row in rows:
            writer.writerow(row)
    _write_manifest(args.out, cfg)
    return 0


def _make_q_policy(name: str, cfg: ScenarioConfig):
    """Combiner factory for the CRB recursion, mirroring the tracking pipeline."""
    array = cfg.array
    n_rf = cfg.combiner.n_rf
    if name == "fd":
        fd = combiner_fd(array)
        return lambda pose: fd
    if name == "rand":
        fixed = combiner_random(stream(cfg.seed, 0, 0, "combiner"), n_rf, array.n_b)
        return lambda pose: fixed
    if name == "qom":
        return lambda pose: combiner_qom(pose, array, n_rf)
    if name == "svd_pe":
        pilot = generate_pilot(stream(cfg.seed, 0, 0, "pilot"), cfg.p_m_watts, array.n_m)

        def policy(pose):
            return combiner_svd_pe(observation_jacobian(pose, array, pilot), n_rf)

        return policy
    raise ConfigError(f"unknown CRB policy {name!r}")


def _cmd_crb(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    policy = _make_q_policy(args.policy, cfg)
    state = bayesian_fim_init(cfg.initial_cov)
    true_state = cfg.initial_state
    rows = []
    for k in range(1, cfg.k_steps + 1):
        rng = stream(cfg.seed, 0, k, "state")
        state = bayesian_fim_step(
            state,
            true_state,
            cfg.array,
            cfg.noise,
            cfg.p_m_watts,
            cfg.noise_power_watts,
            policy,
            args.samples,
            rng,
        )
        bound = bcrb(state)
        rows.append(
            [k, bound[0, 0], bound[1, 1], bound[2, 2], bound[0, 0] + bound[1, 1],
             float(np.trace(bound))]
        )
        true_state = ctrv_transition(true_state, cfg.noise.tau)

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "bcrb_x_m2", "bcrb_y_m2", "bcrb_psi_rad2", "bcrb_pos_trace_m2", "bcrb_trace"])
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.12e}" for v in row[1:]])
    _write_manifest(args.out, cfg)
    return 0


def _write_manifest(out_path, cfg: ScenarioConfig) -> None:
    path = Path(out_path)
    manifest = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "code_version": __version__,
    }
    with open(path.with_suffix(path.suffix + ".manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "track":
            return _cmd_track(args)
        if args.command == "fisher":
            return _cmd_fisher(args)
        if args.command == "crb":
            return _cmd_crb(args)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NfTrackError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
