"""CTRV propagation, Jacobian, and process-noise sampling."""

import numpy as np
import pytest

from nftrack.dynamics import (
    _U_SERIES,
    MsState,
    ProcessNoiseSpec,
    ctrv_jacobian,
    ctrv_transition,
    sample_process_noise,
)


def test_straight_line_limit():
    out = ctrv_transition(MsState(0, 0, 0, 10, 0), 1.0)
    np.testing.assert_allclose(out.as_vector(), [10, 0, 0, 10, 0], atol=1e-12)


def test_quarter_circle():
    out = ctrv_transition(MsState(0, 0, 0, np.pi / 2, np.pi / 2), 1.0)
    np.testing.assert_allclose(
        out.as_vector(), [1, 1, np.pi / 2, np.pi / 2, np.pi / 2], atol=1e-12
    )


def test_transition_matches_closed_form():
    # independent scalar evaluation of the turning equations
    s = MsState(15, -15, 3 * np.pi / 8, 10, 0.1)
    tau = 0.02
    out = ctrv_transition(s, tau)
    x_exp = s.x + s.v / s.omega * (np.sin(s.psi + s.omega * tau) - np.sin(s.psi))
    y_exp = s.y + s.v / s.omega * (-np.cos(s.psi + s.omega * tau) + np.cos(s.psi))
    np.testing.assert_allclose(
        out.as_vector(),
        [x_exp, y_exp, s.psi + s.omega * tau, s.v, s.omega],
        rtol=1e-14,
    )


def test_small_omega_continuity():
    # tiny-turn-rate transitions approach the constant-velocity limit
    # (the residual is the true curvature term ~ v*tau^2*omega/2)
    tau = 0.02
    for sign in (+1, -1):
        s = MsState(15, -15, 0.9, 10, sign * 1e-7)
        cv = np.array(
            [15 + 10 * tau * np.cos(0.9), -15 + 10 * tau * np.sin(0.9), 0.9, 10, s.omega]
        )
        got = ctrv_transition(s, tau).as_vector()
        got[2] -= s.omega * tau  # CV limit keeps psi; remove the exact turn term
        assert np.linalg.norm(got - cv) < 1e-9


def test_flow_composition():
    # two half-steps equal one full step for constant v, omega
    s = MsState(3, -7, 0.5, 8, 0.4)
    tau = 0.7
    once = ctrv_transition(s, tau).as_vector()
    twice = ctrv_transition(ctrv_transition(s, tau / 2), tau / 2).as_vector()
    np.testing.assert_allclose(once, twice, atol=1e-10)


def test_jacobian_stationary_state():
    # v = omega = 0: identity apart from the heading/turn-rate coupling and
    # the speed column (d pos / d v = tau * heading direction)
    tau, psi = 0.5, 0.3
    jac = ctrv_jacobian(MsState(1, 2, psi, 0, 0), tau)
    expected = np.eye(5)
    expected[2, 4] = tau
    expected[0, 3] = tau * np.cos(psi)
    expected[1, 3] = tau * np.sin(psi)
    np.testing.assert_allclose(jac, expected, atol=1e-12)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(7)
    tau = 0.02
    for _ in range(100):
        vec = np.array(
            [
                rng.uniform(-30, 30),
                rng.uniform(-30, 30),
                rng.uniform(-np.pi, np.pi),
                rng.uniform(0.1, 20),
                rng.choice([-1, 1]) * rng.uniform(0.01, 1.0),
            ]
        )
        s = MsState.from_vector(vec)
        jac = ctrv_jacobian(s, tau)
        fd = np.zeros((5, 5))
        for j in range(5):
            dv = np.zeros(5)
            dv[j] = 1e-6
            fp = ctrv_transition(MsState.from_vector(vec + dv), tau).as_vector()
            fm = ctrv_transition(MsState.from_vector(vec - dv), tau).as_vector()
            fd[:, j] = (fp - fm) / 2e-6
        assert np.abs(jac - fd).max() / max(np.abs(jac).max(), 1.0) < 1e-5


def test_jacobian_continuity_at_switch():
    # across the series/direct switch of the u^-2-scaled helpers
    tau = 0.02
    for sign in (+1, -1):
        w_switch = sign * _U_SERIES / tau
        above = ctrv_jacobian(MsState(15, -15, 0.9, 10, w_switch * 1.0000001), tau)
        below = ctrv_jacobian(MsState(15, -15, 0.9, 10, w_switch * 0.9999999), tau)
        assert np.abs(above - below).max() < 1e-8
    # tiny turn rates agree entry-wise with the omega = 0 limit form
    tau = 0.02
    limit = ctrv_jacobian(MsState(15, -15, 0.9, 10, 0.0), tau)
    for sign in (+1, -1):
        near = ctrv_jacobian(MsState(15, -15, 0.9, 10, sign * 1e-6), tau)
        assert np.abs(near - limit).max() < 1e-8


def test_noise_spec_covariance():
    spec = ProcessNoiseSpec(sigma_v=2.0, sigma_omega=0.1, tau=0.02)
    n = spec.covariance()
    assert n.shape == (5, 5)
    np.testing.assert_allclose(np.diag(n), [0, 0, 0, 0.0016, 4e-6], rtol=1e-12)
    assert np.count_nonzero(n - np.diag(np.diag(n))) == 0


def test_zero_noise_is_exactly_zero():
    spec = ProcessNoiseSpec(sigma_v=0.0, sigma_omega=0.0, tau=0.1)
    rng = np.random.default_rng(0)
    for _ in range(10):
        np.testing.assert_array_equal(sample_process_noise(spec, rng), np.zeros(5))


def test_noise_statistics():
    spec = ProcessNoiseSpec(sigma_v=2.0, sigma_omega=0.1, tau=0.02)
    rng = np.random.default_rng(42)
    draws = np.stack([sample_process_noise(spec, rng) for _ in range(100_000)])
    np.testing.assert_array_equal(draws[:, :3], 0.0)
    std_v = spec.tau * spec.sigma_v
    std_w = spec.tau * spec.sigma_omega
    # mean within 4 standard errors of zero
    assert abs(draws[:, 3].mean()) < 4 * std_v / np.sqrt(len(draws))
    assert abs(draws[:, 4].mean()) < 4 * std_w / np.sqrt(len(draws))
    # variance of the linear-velocity component within 5%
    assert draws[:, 3].var() == pytest.approx(std_v**2, rel=0.05)
    assert draws[:, 4].var() == pytest.approx(std_w**2, rel=0.05)


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        ProcessNoiseSpec(sigma_v=-1.0, sigma_omega=0.1, tau=0.02)
    with pytest.raises(ValueError):
        ProcessNoiseSpec(sigma_v=1.0, sigma_omega=0.1, tau=0.0)
    with pytest.raises(ValueError):
        ctrv_transition(MsState(0, 0, 0, 1, 0), -1.0)
