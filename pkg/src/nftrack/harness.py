"""Scenario configuration, Monte Carlo campaigns, metrics, and persistence.

A campaign runs one tracking trial per (scheme, trial index).  Every random
draw is keyed by (seed, trial, step, purpose), so all schemes consume
byte-identical pilot, process-noise, and observation-noise realizations, and
results are invariant to the degree of trial parallelism.
"""

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .combiners import (
    CombinerSpec,
    combiner_fd,
    combiner_mo,
    combiner_qom,
    combiner_random,
    combiner_svd_pe,
)
from .dynamics import MsState, ProcessNoiseSpec, ctrv_transition, sample_process_noise
from .errors import ConfigError, DegenerateGeometry, DegenerateJacobian, SingularPriorCovariance
from .estimation import Belief, Combiner, ekf_predict, ekf_update
from .geometry import ArrayConfig, Pose, channel_matrix
from .observation import generate_pilot, observe, observation_jacobian
from .rng import stream

PILOT_POLICIES = ("per_trial", "per_step")

SCHEME_LABELS = {
    "fd": "fd",
    "random": "rand",
    "rand": "rand",
    "svd_pe": "svd_pe",
    "qom": "qom",
}


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one experiment."""

    array: ArrayConfig
    initial_state: MsState
    initial_cov: np.ndarray
    noise: ProcessNoiseSpec
    p_m_dbm: float
    noise_power_dbm: float
    k_steps: int
    n_trials: int
    combiner: CombinerSpec
    seed: int
    pilot_policy: str = "per_trial"
    wrap_psi_rmse: bool = True
    burn_in: int = 0

    def __post_init__(self):
        if self.k_steps < 1 or self.n_trials < 1:
            raise ConfigError("k_steps and n_trials must be >= 1")
        if self.pilot_policy not in PILOT_POLICIES:
            raise ConfigError(f"pilot_policy must be one of {PILOT_POLICIES}")
        if self.burn_in < 0 or self.burn_in >= self.k_steps:
            raise ConfigError("burn_in must lie in [0, k_steps)")
        cov = np.asarray(self.initial_cov, dtype=float)
        if cov.shape != (5, 5):
            raise ConfigError("initial_cov must be 5x5")
        object.__setattr__(self, "initial_cov", cov)
        if self.combiner.kind == "fd":
            if self.combiner.n_rf != self.array.n_b:
                raise ConfigError("fd combiner requires n_rf == n_b")
        elif self.combiner.n_rf >= self.array.n_b:
            raise ConfigError("compressed combiners require n_rf < n_b")

    @property
    def p_m_watts(self) -> float:
        return dbm_to_watts(self.p_m_dbm)

    @property
    def noise_power_watts(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)

    def with_combiner(self, spec: CombinerSpec) -> "ScenarioConfig":
        return replace(self, combiner=spec)

    def to_dict(self) -> dict:
        return {
            "array": {
                "n_b": self.array.n_b,
                "n_m": self.array.n_m,
                "carrier_freq_ghz": self.array.carrier_freq / 1e9,
                "d_b_m": self.array.d_b,
                "d_m_m": self.array.d_m,
            },
            "initial_state": {
                "x_m": self.initial_state.x,
                "y_m": self.initial_state.y,
                "psi_rad": self.initial_state.psi,
                "v_mps": self.initial_state.v,
                "omega_radps": self.initial_state.omega,
            },
            "initial_cov": np.asarray(self.initial_cov).tolist(),
            "process_noise": {
                "sigma_v_mps2": self.noise.sigma_v,
                "sigma_omega_radps2": self.noise.sigma_omega,
                "tau_s": self.noise.tau,
            },
            "p_m_dbm": self.p_m_dbm,
            "noise_power_dbm": self.noise_power_dbm,
            "k_steps": self.k_steps,
            "n_trials": self.n_trials,
            "combiner": {
                "kind": self.combiner.kind,
                "n_rf": self.combiner.n_rf,
                "mo_init": self.combiner.mo_init,
                "mo_iters": self.combiner.mo_iters,
            },
            "seed": self.seed,
            "pilot_policy": self.pilot_policy,
            "wrap_psi_rmse": self.wrap_psi_rmse,
            "burn_in": self.burn_in,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            arr = d["array"]
            array = ArrayConfig(
                n_b=int(arr["n_b"]),
                n_m=int(arr["n_m"]),
                carrier_freq=float(arr["carrier_freq_ghz"]) * 1e9,
                d_b=arr.get("d_b_m"),
                d_m=arr.get("d_m_m"),
            )
            st = d["initial_state"]
            state = MsState(
                x=float(st["x_m"]),
                y=float(st["y_m"]),
                psi=float(st["psi_rad"]),
                v=float(st["v_mps"]),
                omega=float(st["omega_radps"]),
            )
            if "initial_cov" in d:
                cov = np.asarray(d["initial_cov"], dtype=float)
            else:
                cov = np.diag(np.asarray(d["initial_cov_diag"], dtype=float))
            pn = d["process_noise"]
            noise = ProcessNoiseSpec(
                sigma_v=float(pn["sigma_v_mps2"]),
                sigma_omega=float(pn["sigma_omega_radps2"]),
                tau=float(pn["tau_s"]),
            )
            comb = d.get("combiner", {"kind": "fd", "n_rf": int(arr["n_b"])})
            spec = CombinerSpec(
                kind=comb["kind"],
                n_rf=int(comb["n_rf"]),
                mo_init=comb.get("mo_init"),
                mo_iters=int(comb.get("mo_iters", 5)),
            )
            return cls(
                array=array,
                initial_state=state,
                initial_cov=cov,
                noise=noise,
                p_m_dbm=float(d["p_m_dbm"]),
                noise_power_dbm=float(d["noise_power_dbm"]),
                k_steps=int(d["k_steps"]),
                n_trials=int(d["n_trials"]),
                combiner=spec,
                seed=int(d["seed"]),
                pilot_policy=d.get("pilot_policy", "per_trial"),
                wrap_psi_rmse=bool(d.get("wrap_psi_rmse", True)),
                burn_in=int(d.get("burn_in", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario configuration: {exc}") from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ScenarioConfig.from_dict(data)


@dataclass
class TrialRecord:
    """Per-step log of one tracking trial; reproducible from (seed, trial)."""

    trial_index: int
    true_states: np.ndarray  # (k_steps + 1, 5), row 0 = initial state
    prior_means: np.ndarray  # (k_steps, 5)
    prior_covs: np.ndarray  # (k_steps, 5, 5)
    post_means: np.ndarray  # (k_steps, 5)
    post_covs: np.ndarray  # (k_steps, 5, 5)
    pilot_norm_sq: float
    fallback_steps: List[int] = field(default_factory=list)
    mo_stalled_steps: List[int] = field(default_factory=list)
    diverged_at: Optional[int] = None


@dataclass
class SchemeMetrics:
    rmse_x: np.ndarray  # per step, m
    rmse_y: np.ndarray
    rmse_psi: np.ndarray  # rad
    nmse_h: np.ndarray
    avg_rmse_x: float
    avg_rmse_y: float
    avg_rmse_psi: float
    avg_nmse_h: float
    n_diverged: int


@dataclass
class CampaignResult:
    config: ScenarioConfig
    schemes: Dict[str, SchemeMetrics]

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scheme", "k", "rmse_x_m", "rmse_y_m", "rmse_psi_rad", "nmse_h"])
            for label, metrics in self.schemes.items():
                for i in range(len(metrics.rmse_x)):
                    writer.writerow(
                        [
                            label,
                            i + 1,
                            f"{metrics.rmse_x[i]:.12e}",
                            f"{metrics.rmse_y[i]:.12e}",
                            f"{metrics.rmse_psi[i]:.12e}",
                            f"{metrics.nmse_h[i]:.12e}",
                        ]
                    )
        manifest = {
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "code_version": __version__,
            "schemes": list(self.schemes.keys()),
        }
        with open(path.with_suffix(path.suffix + ".manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def scheme_label(spec: CombinerSpec) -> str:
    if spec.kind == "mo":
        return f"mo:{SCHEME_LABELS[spec.mo_init]}"
    return SCHEME_LABELS[spec.kind]


def parse_scheme(token: str, n_rf: int, n_b: int, mo_iters: int = 5) -> CombinerSpec:
    """Translate a CLI scheme token (fd, rand, svd_pe, qom, mo:<init>)."""
    token = token.strip().lower()
    if token.startswith("mo:"):
        init = token[3:]
        init_kind = {"rand": "random", "random": "random", "svd_pe": "svd_pe", "qom": "qom"}.get(init)
        if init_kind is None:
            raise ConfigError(f"unknown mo initializer {init!r}")
        return CombinerSpec(kind="mo", n_rf=n_rf, mo_init=init_kind, mo_iters=mo_iters)
    kind = {"fd": "fd", "rand": "random", "random": "random", "svd_pe": "svd_pe", "qom": "qom"}.get(token)
    if kind is None:
        raise ConfigError(f"unknown scheme {token!r}")
    return CombinerSpec(kind=kind, n_rf=n_b if kind == "fd" else n_rf)


def simulate_truth(cfg: ScenarioConfig, trial_index: int) -> np.ndarray:
    """True trajectory, shared by every scheme within a trial."""
    states = np.zeros((cfg.k_steps + 1, 5))
    state = cfg.initial_state
    states[0] = state.as_vector()
    for k in range(1, cfg.k_steps + 1):
        noise = sample_process_noise(cfg.noise, stream(cfg.seed, trial_index, k, "process"))
        state = MsState.from_vector(ctrv_transition(state, cfg.noise.tau).as_vector() + noise)
        states[k] = state.as_vector()
    return states


class _CombinerBuilder:
    """Per-trial combiner factory implementing the prediction-stage contract.

    Builders see only the predicted belief.  A degenerate mode geometry
    falls back to the previous step's combiner (at the first step, to the
    phase-extracted SVD combiner) and flags the step.
    """

    def __init__(self, cfg: ScenarioConfig, trial_index: int):
        self.cfg = cfg
        self.spec = cfg.combiner
        self.noise_power = cfg.noise_power_watts
        self._identity = None
        self._random = None
        self._previous = None
        if self.spec.kind == "fd":
            self._identity = combiner_fd(cfg.array)
        if self.spec.kind == "random" or (self.spec.kind == "mo" and self.spec.mo_init == "random"):
            rng = stream(cfg.seed, trial_index, 0, "combiner")
            self._random = combiner_random(rng, self.spec.n_rf, cfg.array.n_b)

    def build(self, prior: Belief, b_jac: np.ndarray, record: TrialRecord, k: int) -> Combiner:
        spec = self.spec
        if spec.kind == "fd":
            return self._identity
        if spec.kind == "random":
            return self._random
        if spec.kind == "svd_pe":
            comb = self._svd_or_fallback(prior, b_jac, record, k)
        elif spec.kind == "qom":
            comb = self._qom_or_fallback(prior, b_jac, record, k)
        else:  # mo
            init = self._mo_init(prior, b_jac, record, k)
            comb, info = combiner_mo(init, prior, b_jac, self.noise_power, spec.mo_iters)
            if not info.improved:
                record.mo_stalled_steps.append(k)
        self._previous = comb
        return comb

    def _svd_or_fallback(self, prior, b_jac, record, k) -> Combiner:
        try:
            return combiner_svd_pe(b_jac, self.spec.n_rf)
        except DegenerateJacobian:
            record.fallback_steps.append(k)
            if self._previous is not None:
                return self._previous
            rng = stream(self.cfg.seed, record.trial_index, 0, "combiner")
            return combiner_random(rng, self.spec.n_rf, self.cfg.array.n_b)

    def _qom_or_fallback(self, prior, b_jac, record, k) -> Combiner:
        try:
            return combiner_qom(prior.mean.pose, self.cfg.array, self.spec.n_rf)
        except DegenerateGeometry:
            record.fallback_steps.append(k)
            if self._previous is not None:
                return self._previous
            return self._svd_or_fallback(prior, b_jac, record, k)

    def _mo_init(self, prior, b_jac, record, k) -> Combiner:
        if self.spec.mo_init == "random":
            return self._random
        if self.spec.mo_init == "svd_pe":
            return self._svd_or_fallback(prior, b_jac, record, k)
        return self._qom_or_fallback(prior, b_jac, record, k)


def run_trial(cfg: ScenarioConfig, trial_index: int) -> TrialRecord:
    """Simulate the truth and run the predictive-combining EKF over it."""
    array = cfg.array
    sigma2 = cfg.noise_power_watts
    truth = simulate_truth(cfg, trial_index)

    record = TrialRecord(
        trial_index=trial_index,
        true_states=truth,
        prior_means=np.zeros((cfg.k_steps, 5)),
        prior_covs=np.zeros((cfg.k_steps, 5, 5)),
        post_means=np.zeros((cfg.k_steps, 5)),
        post_covs=np.zeros((cfg.k_steps, 5, 5)),
        pilot_norm_sq=0.0,
    )

    pilot = None
    if cfg.pilot_policy == "per_trial":
        pilot = generate_pilot(
            stream(cfg.seed, trial_index, 0, "pilot"), cfg.p_m_watts, array.n_m
        )
        record.pilot_norm_sq = float(np.linalg.norm(pilot.symbols) ** 2)

    builder = _CombinerBuilder(cfg, trial_index)
    belief = Belief(mean=cfg.initial_state, cov=cfg.initial_cov.copy())

    for k in range(1, cfg.k_steps + 1):
        i = k - 1
        if cfg.pilot_policy == "per_step":
            pilot = generate_pilot(
                stream(cfg.seed, trial_index, k, "pilot"), cfg.p_m_watts, array.n_m
            )
            record.pilot_norm_sq = float(np.linalg.norm(pilot.symbols) ** 2)

        prior = ekf_predict(belief, cfg.noise)
        record.prior_means[i] = prior.mean.as_vector()
        record.prior_covs[i] = prior.cov

        if record.diverged_at is not None:
            # Filter is dead; coast on the prediction for the remaining steps.
            belief = prior
            record.post_means[i] = belief.mean.as_vector()
            record.post_covs[i] = belief.cov
            continue

        pose_pred = prior.mean.pose
        b_jac = observation_jacobian(pose_pred, array, pilot)
        b_pred = channel_matrix(pose_pred, array) @ pilot.symbols
        combiner = builder.build(prior, b_jac, record, k)

        true_pose = Pose(truth[k, 0], truth[k, 1], truth[k, 2])
        h_true = channel_matrix(true_pose, array)
        obs = observe(h_true, pilot, combiner, sigma2, stream(cfg.seed, trial_index, k, "obs"))

        try:
            belief = ekf_update(
                prior, obs, combiner, pilot, array, sigma2,
                b_jac=b_jac, predicted_obs=b_pred,
            )
        except SingularPriorCovariance:
            record.diverged_at = k
            belief = prior
        record.post_means[i] = belief.mean.as_vector()
        record.post_covs[i] = belief.cov

    return record


def _wrap_angle(e: np.ndarray) -> np.ndarray:
    return np.mod(e + np.pi, 2 * np.pi) - np.pi


def metrics_rmse(records: Sequence[TrialRecord], param: str, wrap_psi: bool = True) -> np.ndarray:
    """Per-step RMSE over trials for one state parameter."""
    if not records:
        raise ValueError("no trial records")
    col = {"x": 0, "y": 1, "psi": 2, "v": 3, "omega": 4}[param]
    errors = np.stack(
        [rec.post_means[:, col] - rec.true_states[1:, col] for rec in records]
    )
    if param == "psi" and wrap_psi:
        errors = _wrap_angle(errors)
    return np.sqrt(np.mean(errors**2, axis=0))


def metrics_nmse(records: Sequence[TrialRecord], cfg: ScenarioConfig) -> np.ndarray:
    """Per-step channel-reconstruction NMSE, channels rebuilt from poses."""
    if not records:
        raise ValueError("no trial records")
    k_steps = records[0].post_means.shape[0]
    num = np.zeros(k_steps)
    den = np.zeros(k_steps)
    for rec in records:
        for i in range(k_steps):
            true_pose = Pose(*rec.true_states[i + 1, :3])
            est_pose = Pose(*rec.post_means[i, :3])
            h_true = channel_matrix(true_pose, cfg.array)
            h_est = channel_matrix(est_pose, cfg.array)
            num[i] += np.linalg.norm(h_est - h_true) ** 2
            den[i] += np.linalg.norm(h_true) ** 2
    return num / den


def _metrics_for_records(records, cfg) -> SchemeMetrics:
    rx = metrics_rmse(records, "x", cfg.wrap_psi_rmse)
    ry = metrics_rmse(records, "y", cfg.wrap_psi_rmse)
    rp = metrics_rmse(records, "psi", cfg.wrap_psi_rmse)
    nm = metrics_nmse(records, cfg)
    b = cfg.burn_in
    return SchemeMetrics(
        rmse_x=rx,
        rmse_y=ry,
        rmse_psi=rp,
        nmse_h=nm,
        avg_rmse_x=float(np.mean(rx[b:])),
        avg_rmse_y=float(np.mean(ry[b:])),
        avg_rmse_psi=float(np.mean(rp[b:])),
        avg_nmse_h=float(np.mean(nm[b:])),
        n_diverged=sum(1 for r in records if r.diverged_at is not None),
    )


def _trial_task(args):
    cfg, trial_index = args
    return run_trial(cfg, trial_index)


def run_campaign(
    cfg: ScenarioConfig,
    schemes: Sequence[CombinerSpec],
    threads: int = 1,
) -> CampaignResult:
    """Run every scheme over shared realizations and aggregate metrics."""
    if not schemes:
        raise ConfigError("at least one combiner scheme is required")
    results: Dict[str, SchemeMetrics] = {}
    for spec in schemes:
        scheme_cfg = cfg.with_combiner(spec)
        tasks = [(scheme_cfg, t) for t in range(cfg.n_trials)]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                records = list(pool.map(_trial_task, tasks))
        else:
            records = [run_trial(scheme_cfg, t) for t in range(cfg.n_trials)]
        records.sort(key=lambda r: r.trial_index)
        results[scheme_label(spec)] = _metrics_for_records(records, scheme_cfg)
    return CampaignResult(config=cfg, schemes=results)
