"""Information-form extended Kalman filter over the compressed observation.

The complex observation enters through a real score vector and Fisher
information matrix; the posterior covariance is the inverse of prior
information plus data information.  All covariance outputs are explicitly
symmetrized to suppress drift over long runs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .dynamics import MsState, ProcessNoiseSpec, ctrv_jacobian, ctrv_transition
from .errors import RankDeficientCombiner, SingularPriorCovariance

# Relative singular-value gate below which combiner rows count as dependent.
_RANK_RTOL = 1e-8


class Combiner:
    """Analog combining matrix with cached row-space factorizations.

    The Gram matrix Q Q^H is Cholesky-factored once per instance, and the
    full row-space projection Q^H (Q Q^H)^-1 Q is materialized lazily (it is
    only needed by diagnostics; the filter path uses Gram solves).
    """

    def __init__(self, q: np.ndarray, unit_modulus: bool, is_identity: bool = False):
        q = np.asarray(q, dtype=complex)
        if q.ndim != 2:
            raise ValueError("combiner must be a 2-D matrix")
        if unit_modulus and not np.allclose(np.abs(q), 1.0, atol=1e-9):
            raise ValueError("unit-modulus combiner has entries away from the unit circle")
        self.q = q
        self.unit_modulus = unit_modulus
        self.is_identity = is_identity
        self._gram_cho = None
        self._projection = None

    @property
    def n_rf(self) -> int:
        return self.q.shape[0]

    @property
    def n_b(self) -> int:
        return self.q.shape[1]

    def _check_rank(self):
        svals = np.linalg.svd(self.q, compute_uv=False)
        if svals[-1] <= _RANK_RTOL * svals[0]:
            raise RankDeficientCombiner(
                f"smallest singular value {svals[-1]:.3e} under gate "
                f"{_RANK_RTOL:.0e} x {svals[0]:.3e}"
            )

    def _gram(self):
        if self._gram_cho is None:
            self._check_rank()
            gram = self.q @ self.q.conj().T
            self._gram_cho = cho_factor(gram, lower=True)
        return self._gram_cho

    def apply(self, y: np.ndarray) -> np.ndarray:
        """Compress a full-array vector: Q y."""
        if self.is_identity:
            return np.array(y, copy=True)
        return self.q @ y

    def solve_gram(self, rhs: np.ndarray) -> np.ndarray:
        """(Q Q^H)^-1 rhs."""
        if self.is_identity:
            return np.array(rhs, copy=True)
        return cho_solve(self._gram(), rhs)

    def project(self, m: np.ndarray) -> np.ndarray:
        """P_Q m without materializing the n_b x n_b projection."""
        if self.is_identity:
            return np.array(m, copy=True)
        return self.q.conj().T @ self.solve_gram(self.q @ m)

    def projection_norm_sq(self, m: np.ndarray) -> float:
        """||P_Q m||_F^2 via the Gram Cholesky factor."""
        if self.is_identity:
            return float(np.linalg.norm(m) ** 2)
        w = self.q @ m
        half = solve_triangular(self._gram()[0], w, lower=True)
        return float(np.linalg.norm(half) ** 2)

    @property
    def projection(self) -> np.ndarray:
        """Orthogonal projection onto the row space of Q (cached)."""
        if self._projection is None:
            if self.is_identity:
                self._projection = np.eye(self.n_b, dtype=complex)
            else:
                half = solve_triangular(self._gram()[0], self.q, lower=True)
                self._projection = half.conj().T @ half
        return self._projection


@dataclass(frozen=True)
class Belief:
    """State estimate with covariance (prior or posterior)."""

    mean: MsState
    cov: np.ndarray


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def psd_inverse(m: np.ndarray, exc=SingularPriorCovariance) -> np.ndarray:
    """Invert a symmetric PSD matrix by Cholesky; one jitter retry, then fail."""
    ms = _symmetrize(np.asarray(m, dtype=float))
    eye = np.eye(ms.shape[0])
    for attempt in range(2):
        try:
            c = cho_factor(ms, lower=True)
            return _symmetrize(cho_solve(c, eye))
        except (np.linalg.LinAlgError, ValueError):
            # ValueError covers NaN/inf contamination after divergence.
            if attempt == 1:
                break
            ms = ms + (1e-12 * np.trace(ms) / ms.shape[0]) * eye
    raise exc("covariance not positive definite even after jitter")


def row_space_projection(q: Combiner) -> np.ndarray:
    """Q^H (Q Q^H)^-1 Q, computed through a Cholesky factor of the Gram matrix."""
    return q.projection


def score(
    z,
    q: Combiner,
    b: np.ndarray,
    predicted_obs: np.ndarray,
    noise_power: float,
) -> np.ndarray:
    """Gradient of the compressed-observation log-likelihood w.r.t. the state.

    g = (2/sigma^2) Re{ B^H Q^H (Q Q^H)^-1 (z - Q b_pred) }.
    """
    zvec = z.z if hasattr(z, "z") else np.asarray(z)
    residual = zvec - q.apply(predicted_obs)
    weighted = q.solve_gram(residual)
    if q.is_identity:
        back = weighted
    else:
        back = q.q.conj().T @ weighted
    return (2.0 / noise_power) * np.real(b.conj().T @ back)


def fim(b: np.ndarray, q: Combiner, noise_power: float) -> np.ndarray:
    """Fisher information of one compressed snapshot:
    (2/sigma^2) Re{ B^H P_Q B }, symmetric PSD with zero velocity rows."""
    if q.is_identity:
        core = b.conj().T @ b
    else:
        w = q.q @ b
        core = w.conj().T @ q.solve_gram(w)
    return _symmetrize((2.0 / noise_power) * np.real(core))


def ekf_predict(posterior: Belief, spec: ProcessNoiseSpec) -> Belief:
    """Propagate mean through the CTRV flow and covariance through its Jacobian."""
    a = ctrv_jacobian(posterior.mean, spec.tau)
    mean = ctrv_transition(posterior.mean, spec.tau)
    cov = _symmetrize(a @ posterior.cov @ a.T + spec.covariance())
    return Belief(mean=mean, cov=cov)


def ekf_update(
    prior: Belief,
    z,
    q: Combiner,
    pilot,
    cfg,
    noise_power: float,
    b_jac: np.ndarray = None,
    predicted_obs: np.ndarray = None,
) -> Belief:
    """Information-form update linearized at the prior mean.

    P_post = (P_prior^-1 + F)^-1 and mean_post = mean_prior + P_post g.
    Callers that already evaluated the observation Jacobian / predicted
    observation at the prior mean can pass them in to avoid recomputation.
    """
    from .geometry import channel_matrix
    from .observation import observation_jacobian

    pose = prior.mean.pose
    if b_jac is None:
        b_jac = observation_jacobian(pose, cfg, pilot)
    if predicted_obs is None:
        predicted_obs = channel_matrix(pose, cfg) @ pilot.symbols

    f = fim(b_jac, q, noise_power)
    g = score(z, q, b_jac, predicted_obs, noise_power)

    prior_info = psd_inverse(prior.cov)
    post_cov = psd_inverse(prior_info + f)
    post_mean = prior.mean.as_vector() + post_cov @ g
    return Belief(mean=MsState.from_vector(post_mean), cov=_symmetrize(post_cov))
