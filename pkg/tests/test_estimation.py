"""Information-form EKF: projections, score, FIM, predict and update."""

import numpy as np
import pytest

from nftrack.combiners import combiner_fd, combiner_random
from nftrack.dynamics import MsState, ProcessNoiseSpec, ctrv_jacobian, ctrv_transition
from nftrack.errors import RankDeficientCombiner
from nftrack.estimation import (
    Belief,
    Combiner,
    ekf_predict,
    ekf_update,
    fim,
    psd_inverse,
    row_space_projection,
    score,
)
from nftrack.geometry import ArrayConfig, Pose, channel_matrix
from nftrack.observation import Pilot, generate_pilot, observation_jacobian, observe

F28 = 28e9


def cfg_small():
    return ArrayConfig(n_b=17, n_m=5, carrier_freq=F28)


def make_b_and_pred(cfg, pose, pilot):
    b = observation_jacobian(pose, cfg, pilot)
    pred = channel_matrix(pose, cfg) @ pilot.symbols
    return b, pred


# ---------------------------------------------------------------- projection


def test_projection_identity():
    q = combiner_fd(cfg_small())
    np.testing.assert_allclose(row_space_projection(q), np.eye(17), atol=1e-12)


def test_projection_single_ones_row():
    n = 12
    q = Combiner(np.ones((1, n), dtype=complex), unit_modulus=True)
    np.testing.assert_allclose(row_space_projection(q), np.full((n, n), 1 / n), atol=1e-12)


def test_projection_laws_random_sign_combiner():
    rng = np.random.default_rng(0)
    q = combiner_random(rng, 3, 32)
    p = row_space_projection(q)
    np.testing.assert_allclose(p @ p, p, atol=1e-9)
    np.testing.assert_allclose(p.conj().T, p, atol=1e-9)
    assert np.real(np.trace(p)) == pytest.approx(3.0, abs=1e-9)


def test_rank_gate():
    q = np.ones((2, 8), dtype=complex)  # duplicated rows
    comb = Combiner(q, unit_modulus=True)
    with pytest.raises(RankDeficientCombiner):
        _ = comb.projection


# ---------------------------------------------------------------------- score


def test_score_zero_residual():
    cfg = cfg_small()
    pilot = generate_pilot(np.random.default_rng(1), 0.01, cfg.n_m)
    pose = Pose(10, -4, 0.2)
    b, pred = make_b_and_pred(cfg, pose, pilot)
    q = combiner_fd(cfg)
    z = q.apply(pred)
    g = score(z, q, b, pred, 1e-10)
    np.testing.assert_allclose(g, 0.0, atol=1e-6)
    assert g[3] == 0.0 and g[4] == 0.0


def test_score_velocity_components_always_zero():
    cfg = cfg_small()
    pilot = generate_pilot(np.random.default_rng(2), 0.01, cfg.n_m)
    pose = Pose(8, 6, -0.5)
    b, pred = make_b_and_pred(cfg, pose, pilot)
    q = combiner_random(np.random.default_rng(3), 3, cfg.n_b)
    rng = np.random.default_rng(4)
    for _ in range(5):
        obs = observe(channel_matrix(pose, cfg), pilot, q, 1e-10, rng)
        g = score(obs, q, b, pred, 1e-10)
        assert g[3] == 0.0 and g[4] == 0.0


def test_score_zero_mean_at_truth():
    cfg = cfg_small()
    sigma2 = 1e-10
    pilot = generate_pilot(np.random.default_rng(5), 0.01, cfg.n_m)
    pose = Pose(12, -7, 0.9)
    b, pred = make_b_and_pred(cfg, pose, pilot)
    h = channel_matrix(pose, cfg)
    q = combiner_random(np.random.default_rng(6), 3, cfg.n_b)
    rng = np.random.default_rng(7)
    n_draws = 10_000
    samples = np.zeros((n_draws, 5))
    for i in range(n_draws):
        obs = observe(h, pilot, q, sigma2, rng)
        samples[i] = score(obs, q, b, pred, sigma2)
    f = fim(b, q, sigma2)
    std_err = np.sqrt(np.diag(f) / n_draws)
    for j in range(3):
        assert abs(samples[:, j].mean()) < 4 * std_err[j]


# ----------------------------------------------------------------------- FIM


def test_fim_identity_combiner_form():
    cfg = cfg_small()
    pilot = generate_pilot(np.random.default_rng(8), 0.01, cfg.n_m)
    b, _ = make_b_and_pred(cfg, Pose(9, 2, 0.1), pilot)
    sigma2 = 2e-10
    f = fim(b, combiner_fd(cfg), sigma2)
    np.testing.assert_allclose(f, 2 / sigma2 * np.real(b.conj().T @ b), rtol=1e-10)
    np.testing.assert_array_equal(f[3:, :], 0.0)
    assert np.all(np.linalg.eigvalsh(f) > -1e-6 * np.trace(f))


def test_fim_matches_score_covariance():
    cfg = cfg_small()
    sigma2 = 1e-10
    pilot = generate_pilot(np.random.default_rng(9), 0.01, cfg.n_m)
    pose = Pose(11, -11, 1.1)
    b, pred = make_b_and_pred(cfg, pose, pilot)
    h = channel_matrix(pose, cfg)
    q = combiner_random(np.random.default_rng(10), 3, cfg.n_b)
    f = fim(b, q, sigma2)

    # vectorized score sampling: g = Re{ U n } for the noise-only residual
    u = (2 / sigma2) * (q.solve_gram(q.q @ b)).conj().T @ q.q  # 5 x n_b
    rng = np.random.default_rng(11)
    n_draws = 100_000
    noise = np.sqrt(sigma2 / 2) * (
        rng.standard_normal((n_draws, cfg.n_b)) + 1j * rng.standard_normal((n_draws, cfg.n_b))
    )
    g = np.real(noise @ u.T)
    emp = g.T @ g / n_draws
    sig = np.abs(f) > 1e-6 * np.trace(f)
    np.testing.assert_allclose(emp[sig], f[sig], rtol=0.05)


def test_fim_monotone_under_row_extension():
    cfg = cfg_small()
    pilot = generate_pilot(np.random.default_rng(12), 0.01, cfg.n_m)
    b, _ = make_b_and_pred(cfg, Pose(14, 3, -0.3), pilot)
    rng = np.random.default_rng(13)
    for _ in range(50):
        q1_rows = rng.standard_normal((2, cfg.n_b)) + 1j * rng.standard_normal((2, cfg.n_b))
        extra = rng.standard_normal((1, cfg.n_b)) + 1j * rng.standard_normal((1, cfg.n_b))
        q1 = Combiner(q1_rows, unit_modulus=False)
        q2 = Combiner(np.vstack([q1_rows, extra]), unit_modulus=False)
        assert np.trace(fim(b, q2, 1e-10)) >= np.trace(fim(b, q1, 1e-10)) - 1e-8


def test_fd_fim_dominates_any_combiner():
    cfg = cfg_small()
    pilot = generate_pilot(np.random.default_rng(14), 0.01, cfg.n_m)
    b, _ = make_b_and_pred(cfg, Pose(13, -2, 0.7), pilot)
    sigma2 = 1e-10
    t_fd = np.trace(fim(b, combiner_fd(cfg), sigma2))
    rng = np.random.default_rng(15)
    for _ in range(20):
        q = Combiner(
            rng.standard_normal((3, cfg.n_b)) + 1j * rng.standard_normal((3, cfg.n_b)),
            unit_modulus=False,
        )
        assert np.trace(fim(b, q, sigma2)) <= t_fd * (1 + 1e-12)


# ----------------------------------------------------------------- EKF steps


def test_psd_inverse_roundtrip():
    rng = np.random.default_rng(16)
    a = rng.standard_normal((5, 5))
    m = a @ a.T + np.eye(5)
    inv = psd_inverse(m)
    np.testing.assert_allclose(inv @ m, np.eye(5), atol=1e-10)


def test_predict_stationary_state():
    spec = ProcessNoiseSpec(sigma_v=0.0, sigma_omega=0.0, tau=0.5)
    cov0 = np.diag([1.0, 2.0, 3.0, 4.0, 5.0])
    post = Belief(MsState(1, 2, 0.3, 0, 0), cov0)
    prior = ekf_predict(post, spec)
    a = ctrv_jacobian(post.mean, spec.tau)
    np.testing.assert_allclose(prior.cov, a @ cov0 @ a.T, atol=1e-12)
    np.testing.assert_allclose(prior.mean.as_vector(), post.mean.as_vector(), atol=1e-12)
    assert np.all(np.linalg.eigvalsh(prior.cov) >= -1e-12)


def test_predict_matches_hand_composition():
    # one step from the published initial condition
    spec = ProcessNoiseSpec(sigma_v=2.0, sigma_omega=0.1, tau=0.02)
    mean0 = MsState(15, -15, 3 * np.pi / 8, 10, 0.1)
    cov0 = np.diag([0.05**2, 0.05**2, 0.001**2, 10**2 / 100, 0.1**2 / 100])
    prior = ekf_predict(Belief(mean0, cov0), spec)
    a = ctrv_jacobian(mean0, spec.tau)
    np.testing.assert_allclose(prior.cov, a @ cov0 @ a.T + spec.covariance(), rtol=1e-12)
    np.testing.assert_allclose(
        prior.mean.as_vector(), ctrv_transition(mean0, spec.tau).as_vector(), rtol=1e-14
    )


def test_update_with_zero_pilot_keeps_prior():
    cfg = cfg_small()
    pilot = Pilot(symbols=np.zeros(cfg.n_m, dtype=complex), power=1.0)
    prior = Belief(MsState(10, -5, 0.4, 8, 0.05), np.diag([0.01, 0.01, 1e-4, 1.0, 1e-4]))
    q = combiner_fd(cfg)
    obs = observe(channel_matrix(prior.mean.pose, cfg), pilot, q, 1e-10, np.random.default_rng(17))
    post = ekf_update(prior, obs, q, pilot, cfg, 1e-10)
    np.testing.assert_allclose(post.mean.as_vector(), prior.mean.as_vector(), atol=1e-12)
    np.testing.assert_allclose(post.cov, prior.cov, rtol=1e-9)


def test_update_information_dominance_small_noise():
    cfg = cfg_small()
    sigma2 = 1e-16
    pilot = generate_pilot(np.random.default_rng(18), 0.01, cfg.n_m)
    true_pose = Pose(10, -5, 0.4)
    prior = Belief(MsState(10, -5, 0.4, 8, 0.05), np.diag([0.01, 0.01, 1e-4, 1.0, 1e-4]))
    q = combiner_fd(cfg)
    obs = observe(channel_matrix(true_pose, cfg), pilot, q, sigma2, np.random.default_rng(19))
    post = ekf_update(prior, obs, q, pilot, cfg, sigma2)
    assert np.trace(post.cov[:3, :3]) < np.trace(prior.cov[:3, :3]) / 10


def test_update_loewner_order():
    cfg = cfg_small()
    sigma2 = 1e-10
    pilot = generate_pilot(np.random.default_rng(20), 0.01, cfg.n_m)
    prior = Belief(MsState(12, -9, 1.0, 9, 0.1), np.diag([0.01, 0.01, 1e-4, 1.0, 1e-4]))
    q = combiner_random(np.random.default_rng(21), 3, cfg.n_b)
    obs = observe(channel_matrix(prior.mean.pose, cfg), pilot, q, sigma2, np.random.default_rng(22))
    post = ekf_update(prior, obs, q, pilot, cfg, sigma2)
    assert np.all(np.linalg.eigvalsh(prior.cov - post.cov) >= -1e-10)


def test_update_against_scalar_reimplementation():
    # independent step-by-step evaluation with explicit pinv-based formulas
    cfg = cfg_small()
    sigma2 = 1e-10
    pilot = generate_pilot(np.random.default_rng(23), 0.01, cfg.n_m)
    true_pose = Pose(10.01, -5.02, 0.41)
    prior = Belief(MsState(10, -5, 0.4, 8, 0.05), np.diag([0.01, 0.01, 1e-4, 1.0, 1e-4]))
    q = combiner_random(np.random.default_rng(24), 3, cfg.n_b)
    obs = observe(channel_matrix(true_pose, cfg), pilot, q, sigma2, np.random.default_rng(25))
    post = ekf_update(prior, obs, q, pilot, cfg, sigma2)

    qm = q.q
    b, pred = make_b_and_pred(cfg, prior.mean.pose, pilot)
    gram_inv = np.linalg.pinv(qm @ qm.conj().T)
    g_ref = (2 / sigma2) * np.real(b.conj().T @ qm.conj().T @ gram_inv @ (obs.z - qm @ pred))
    p_q = qm.conj().T @ gram_inv @ qm
    f_ref = (2 / sigma2) * np.real(b.conj().T @ p_q @ b)
    p_post_ref = np.linalg.inv(np.linalg.inv(prior.cov) + f_ref)
    mean_ref = prior.mean.as_vector() + p_post_ref @ g_ref

    np.testing.assert_allclose(post.mean.as_vector(), mean_ref, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(post.cov, 0.5 * (p_post_ref + p_post_ref.T), rtol=1e-8)
