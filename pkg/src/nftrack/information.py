"""Fisher-information analysis and the Bayesian CRB recursion.

The average Fisher information integrates the per-pilot information over the
pilot distribution in closed form; the Bayesian bound combines information
transported through the motion model with the expected data information of
each new snapshot.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import MsState, ProcessNoiseSpec, ctrv_jacobian, ctrv_transition, sample_process_noise
from .errors import AssumptionViolated
from .estimation import Combiner, _symmetrize
from .geometry import ArrayConfig, ChannelDerivatives, Pose, channel_derivatives, geometry_summary


@dataclass(frozen=True)
class AvgFisher:
    """Pilot-averaged Fisher information per pose parameter."""

    f_x: float  # 1/m^2
    f_y: float  # 1/m^2
    f_psi: float  # 1/rad^2


@dataclass(frozen=True)
class BayesianFimState:
    f_b: np.ndarray  # 5x5 Bayesian Fisher information
    k: int


def avg_fisher(
    derivs: ChannelDerivatives,
    q: Combiner,
    p_m: float,
    noise_power: float,
    n_m: int,
) -> AvgFisher:
    """(2 P_m / (sigma^2 N_m)) * ||P_Q J_mu||_F^2 for mu in {x, y, psi}."""
    scale = 2.0 * p_m / (noise_power * n_m)
    return AvgFisher(
        f_x=scale * q.projection_norm_sq(derivs.j_x),
        f_y=scale * q.projection_norm_sq(derivs.j_y),
        f_psi=scale * q.projection_norm_sq(derivs.j_psi),
    )


def expected_fim(
    derivs: ChannelDerivatives,
    q: Combiner,
    p_m: float,
    noise_power: float,
    n_m: int,
) -> np.ndarray:
    """Full 5x5 pilot-averaged data FIM.

    Entry (mu, nu) over the pose block is
    (2 P_m / (sigma^2 N_m)) Re tr(J_mu^H P_Q J_nu); velocity rows are zero.
    """
    js = [derivs.j_x, derivs.j_y, derivs.j_psi]
    scale = 2.0 * p_m / (noise_power * n_m)
    f = np.zeros((5, 5))
    if q.is_identity:
        projected = js
        originals = js
    else:
        projected = [q.solve_gram(q.q @ j) for j in js]  # (QQ^H)^-1 Q J_nu
        originals = [q.q @ j for j in js]  # Q J_mu
    for i in range(3):
        for j_idx in range(i, 3):
            val = scale * float(
                np.real(np.sum(np.conj(originals[i]) * projected[j_idx]))
            )
            f[i, j_idx] = val
            f[j_idx, i] = val
    return f


def fisher_scaling_bounds(
    pose: Pose, cfg: ArrayConfig, p_m: float, noise_power: float
) -> "tuple[float, float]":
    """Leading-order ceilings on position and orientation information.

    position: P_m * n_b / (2 sigma^2 r^2)
    orientation: P_m * n_b * (D_m_eff)^2 / (24 sigma^2 r^2) * (1 + 2/(n_m - 1))
    Valid only beyond the Fresnel distance of the BS array.
    """
    geom = geometry_summary(pose, cfg)
    if geom.r <= geom.d_fresnel:
        raise AssumptionViolated(
            f"r = {geom.r:.2f} m is inside the Fresnel distance {geom.d_fresnel:.2f} m"
        )
    position = p_m * cfg.n_b / (2.0 * noise_power * geom.r**2)
    if cfg.n_m == 1:
        return position, 0.0
    orientation = (
        p_m
        * cfg.n_b
        * geom.d_m_eff**2
        / (24.0 * noise_power * geom.r**2)
        * (1.0 + 2.0 / (cfg.n_m - 1))
    )
    return position, orientation


def bayesian_fim_init(prior_cov0: np.ndarray) -> BayesianFimState:
    """Gaussian prior: initial Bayesian FIM is the inverse prior covariance."""
    cov = _symmetrize(np.asarray(prior_cov0, dtype=float))
    chol = np.linalg.cholesky(cov)  # raises LinAlgError if not PD
    inv = np.linalg.solve(cov, np.eye(5))
    del chol
    return BayesianFimState(f_b=_symmetrize(inv), k=0)


def bayesian_fim_step(
    state: BayesianFimState,
    true_state_prev: MsState,
    cfg: ArrayConfig,
    spec: ProcessNoiseSpec,
    pilot_power: float,
    noise_power: float,
    q_policy: Callable[[Pose], Combiner],
    n_samples: int,
    rng: np.random.Generator,
) -> BayesianFimState:
    """One recursion step: transported prior information plus expected data
    information averaged over the next-state distribution.

    The state expectation uses antithetic noise pairs.  Process noise only
    perturbs velocities, so sampled poses usually coincide; identical poses
    are evaluated once.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    a = ctrv_jacobian(true_state_prev, spec.tau)
    f_prev_inv = np.linalg.solve(_symmetrize(state.f_b), np.eye(5))
    f_p = np.linalg.solve(
        _symmetrize(a @ f_prev_inv @ a.T + spec.covariance()), np.eye(5)
    )

    nominal = ctrv_transition(true_state_prev, spec.tau)
    nominal_vec = nominal.as_vector()
    samples = []
    while len(samples) < n_samples:
        noise = sample_process_noise(spec, rng)
        samples.append(nominal_vec + noise)
        if len(samples) < n_samples:
            samples.append(nominal_vec - noise)

    f_d = np.zeros((5, 5))
    cache = {}
    for vec in samples:
        pose_key = (vec[0], vec[1], vec[2])
        if pose_key not in cache:
            pose = Pose(*pose_key)
            derivs = channel_derivatives(pose, cfg)
            comb = q_policy(pose)
            cache[pose_key] = expected_fim(derivs, comb, pilot_power, noise_power, cfg.n_m)
        f_d += cache[pose_key]
    f_d /= len(samples)

    return BayesianFimState(f_b=_symmetrize(f_p + f_d), k=state.k + 1)


def bcrb(state: BayesianFimState) -> np.ndarray:
    """Inverse Bayesian FIM: lower bound on the tracking error covariance."""
    inv = np.linalg.solve(_symmetrize(state.f_b), np.eye(5))
    return _symmetrize(inv)
