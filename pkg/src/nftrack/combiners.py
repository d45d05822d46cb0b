"""Analog combiner construction.

All builders consume only predicted quantities (predicted pose / predicted
observation Jacobian), never the simulation truth: the combiner must be
configured in the prediction stage, before the pilot arrives.

Five families:
  fd      identity matrix (every antenna has its own RF chain),
  random  fixed Rademacher (+/-1) rows,
  svd_pe  phases of the dominant left singular vectors of the predicted
          observation Jacobian,
  qom     beamfocusing vectors on quasi-orthogonal mode indices of the MS
          array, mixed edge-center ordered,
  mo      Riemannian descent on the unit-modulus manifold, minimizing the
          predicted posterior-covariance trace from a given starting point.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DegenerateGeometry, DegenerateJacobian
from .estimation import Belief, Combiner, fim, psd_inverse
from .geometry import ArrayConfig, Pose, antenna_indices, pair_distance

ORDERINGS = ("center_first", "edge_first", "mixed_edge_center")

# |cos(theta) * sin(psi - theta)| below this counts as zero effective
# aperture: the mode resolution is undefined and callers must fall back.
_GEOMETRY_EPS = 1e-12


@dataclass(frozen=True)
class CombinerSpec:
    """Scheme selector carried by the scenario configuration."""

    kind: str  # fd | random | svd_pe | qom | mo
    n_rf: int
    mo_init: Optional[str] = None  # init scheme for kind == "mo"
    mo_iters: int = 5

    def __post_init__(self):
        if self.kind not in ("fd", "random", "svd_pe", "qom", "mo"):
            raise ValueError(f"unknown combiner kind {self.kind!r}")
        if self.n_rf < 1:
            raise ValueError("n_rf must be >= 1")
        if self.kind == "mo":
            if self.mo_init not in ("random", "svd_pe", "qom"):
                raise ValueError("mo combiner needs mo_init in {random, svd_pe, qom}")
            if self.mo_iters < 1:
                raise ValueError("mo_iters must be >= 1")


@dataclass(frozen=True)
class QomPlan:
    """Resolved quasi-orthogonal mode selection for one predicted pose."""

    delta: int
    ell0: int
    n_e: int
    indices: tuple  # selected mode indices, may extend past the array
    ordering: str


def combiner_fd(cfg: ArrayConfig) -> Combiner:
    """Identity combiner: the full snapshot reaches digital processing."""
    return Combiner(np.eye(cfg.n_b, dtype=complex), unit_modulus=False, is_identity=True)


def combiner_random(rng: np.random.Generator, n_rf: int, n_b: int) -> Combiner:
    """I.i.d. +/-1 rows; drawn once per trial and held fixed."""
    if n_rf > n_b:
        raise ValueError("n_rf cannot exceed n_b")
    entries = rng.integers(0, 2, size=(n_rf, n_b)) * 2.0 - 1.0
    return Combiner(entries.astype(complex), unit_modulus=True)


def _fix_singular_vector_signs(u: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    u = u.copy()
    for i in range(u.shape[1]):
        col = u[:, i]
        j = int(np.argmax(np.abs(col)))
        phase = col[j] / abs(col[j]) if abs(col[j]) > 0 else 1.0
        u[:, i] = col / phase
    return u


def combiner_svd_pe(b_pred: np.ndarray, n_rf: int) -> Combiner:
    """Phase-extracted SVD combiner from the predicted observation Jacobian.

    Keeps min(n_rf, 3) left singular vectors: only the three pose columns of
    the Jacobian are nonzero, so extra RF chains carry no extra information
    and stay idle.
    """
    b3 = np.asarray(b_pred)[:, :3]
    if np.linalg.norm(b3) < 1e-15:
        raise DegenerateJacobian("predicted observation Jacobian is numerically zero")
    u, s, _ = np.linalg.svd(b3, full_matrices=False)
    u = _fix_singular_vector_signs(u)

    # Deterministic order under (measure-zero) singular-value ties.
    def _lex_key(i):
        col = u[:, i]
        return (-round(float(s[i]), 12), tuple(np.round(col.real, 12)), tuple(np.round(col.imag, 12)))

    order = sorted(range(len(s)), key=_lex_key)
    u = u[:, order]
    rows = min(n_rf, 3)
    q_svd = u[:, :rows].conj().T
    q = np.exp(1j * np.angle(q_svd))
    return Combiner(q, unit_modulus=True)


def qom_resolution(pose: Pose, cfg: ArrayConfig) -> int:
    """Minimum index spacing between resolvable MS antennas.

    ceil(lambda * r / (d_b * d_m * |cos(theta) sin(psi - theta)| * n_b)).
    """
    geom = abs(math.cos(pose.theta) * math.sin(pose.psi - pose.theta))
    if geom <= _GEOMETRY_EPS:
        raise DegenerateGeometry(
            "effective aperture is zero; mode resolution undefined for this pose"
        )
    arg = cfg.wavelength * pose.r / (cfg.d_b * cfg.d_m * geom * cfg.n_b)
    return max(1, math.ceil(arg))


def _order_center_first(indices: List[int]) -> List[int]:
    return sorted(indices, key=lambda e: (abs(e), e))


def _order_edge_first(indices: List[int]) -> List[int]:
    return sorted(indices, key=lambda e: (-abs(e), e))


def _order_mixed(indices: List[int]) -> List[int]:
    """Alternate edge-first and center-first picks over the dominant modes."""
    edge = _order_edge_first(indices)
    center = _order_center_first(indices)
    out, taken = [], set()
    for e, c in zip(edge, center):
        for cand in (e, c):
            if cand not in taken:
                out.append(cand)
                taken.add(cand)
    return out


def qom_plan(pose: Pose, cfg: ArrayConfig, n_rf: int, ordering: str) -> QomPlan:
    """Select and order the quasi-orthogonal mode indices for n_rf chains.

    In-array modes live on the lattice ell = i*delta + ell0.  When more
    chains than dominant modes are available, virtual modes continue the
    lattice past the array ends, nearest first, alternating sides starting
    with the negative side.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}")
    delta = qom_resolution(pose, cfg)
    hi = int(antenna_indices(cfg.n_m)[-1])
    nbar = (cfg.n_m - 1) // 2 if cfg.n_m % 2 else cfg.n_m // 2
    ell0 = -nbar + math.ceil((2 * nbar % delta) / 2)
    n_e = (2 * nbar) // delta + 1

    dominant = list(range(ell0, hi + 1, delta))
    if ordering == "center_first":
        ordered = _order_center_first(dominant)
    elif ordering == "edge_first":
        ordered = _order_edge_first(dominant)
    else:
        ordered = _order_mixed(dominant)

    if n_rf > len(ordered):
        below = dominant[0] - delta
        above = dominant[-1] + delta
        virtual = []
        while len(virtual) < n_rf - len(ordered):
            virtual.append(below)
            below -= delta
            if len(virtual) < n_rf - len(ordered):
                virtual.append(above)
                above += delta
        ordered = ordered + virtual
    return QomPlan(
        delta=delta, ell0=ell0, n_e=n_e, indices=tuple(ordered[:n_rf]), ordering=ordering
    )


def qom_vector(pose: Pose, cfg: ArrayConfig, ell: int) -> np.ndarray:
    """Unit-norm beamfocusing vector on (possibly virtual) MS antenna ell."""
    r = pair_distance(pose, cfg, cfg.bs_indices, float(ell))
    return np.exp(-2j * np.pi / cfg.wavelength * r) / np.sqrt(cfg.n_b)


def combiner_from_plan(pose: Pose, cfg: ArrayConfig, plan: QomPlan) -> Combiner:
    w = np.column_stack([qom_vector(pose, cfg, ell) for ell in plan.indices])
    q = np.sqrt(cfg.n_b) * w.conj().T
    return Combiner(q, unit_modulus=True)


def combiner_qom(pose_pred: Pose, cfg: ArrayConfig, n_rf: int) -> Combiner:
    """Mixed edge-center ordered mode combiner at the predicted pose."""
    plan = qom_plan(pose_pred, cfg, n_rf, "mixed_edge_center")
    return combiner_from_plan(pose_pred, cfg, plan)


@dataclass
class MoInfo:
    """Diagnostics of one manifold-optimization run."""

    objectives: List[float] = field(default_factory=list)
    accepted_steps: int = 0
    improved: bool = False


def _mo_objective(q: np.ndarray, prior_info: np.ndarray, b: np.ndarray, noise_power: float):
    comb = Combiner(q, unit_modulus=False)
    f = fim(b, comb, noise_power)
    post = psd_inverse(prior_info + f)
    return float(np.trace(post)), post


def _mo_euclidean_grad(
    q: np.ndarray, post: np.ndarray, b: np.ndarray, noise_power: float
) -> np.ndarray:
    """Gradient of trace((P^-1 + F(Q))^-1) w.r.t. Q under Re{tr(G^H dQ)}.

    With S the posterior covariance and M = Q Q^H:
      grad = -(4/sigma^2) M^-1 Q B S^2 B^H (I - P_Q).
    """
    gram = q @ q.conj().T
    w = q @ b  # n_rf x 5
    y = np.linalg.solve(gram, w)  # M^-1 Q B
    s2 = post @ post
    z = y @ s2 @ b.conj().T  # n_rf x n_b
    # P_Q applied from the right: Z P_Q = ((Z Q^H) M^-1) Q, with M Hermitian.
    zqh = z @ q.conj().T
    z_pq = np.linalg.solve(gram, zqh.conj().T).conj().T @ q
    return -(4.0 / noise_power) * (z - z_pq)


def _tangent_project(grad: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Remove the per-entry radial component on the product-of-circles manifold."""
    return grad - np.real(grad * np.conj(q)) * q


def _renormalize(q: np.ndarray) -> np.ndarray:
    mags = np.abs(q)
    mags[mags == 0] = 1.0
    return q / mags


def combiner_mo(
    init: Combiner,
    prior: Belief,
    b_pred: np.ndarray,
    noise_power: float,
    iters: int = 5,
) -> "tuple[Combiner, MoInfo]":
    """Projected Riemannian descent of the predicted MMSE objective.

    Each iteration runs an Armijo-safeguarded forward-backward line search
    (up to 10 doublings while the objective drops, up to 10 halvings
    otherwise) and the best iterate by objective value is returned.  If no
    step is ever accepted the initial combiner is returned with
    improved=False.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    prior_info = psd_inverse(prior.cov)
    q = _renormalize(np.asarray(init.q, dtype=complex).copy())
    f_curr, post = _mo_objective(q, prior_info, b_pred, noise_power)
    info = MoInfo(objectives=[f_curr])
    best_q, best_f = q, f_curr

    for _ in range(iters):
        egrad = _mo_euclidean_grad(q, post, b_pred, noise_power)
        rgrad = _tangent_project(egrad, q)
        gnorm = np.linalg.norm(rgrad)
        if gnorm < 1e-15:
            break

        # Forward-backward line search from a conservative probe step: the
        # step expands only while the objective keeps dropping, so a
        # near-stationary initializer barely moves while a poor one can be
        # restructured within the same iteration budget.
        step = 1e-2 * np.linalg.norm(q) / gnorm

        def _trial(t):
            q_t = _renormalize(q - t * rgrad)
            f_t, post_t = _mo_objective(q_t, prior_info, b_pred, noise_power)
            return q_t, f_t, post_t

        q_new, f_new, post_new = _trial(step)
        accepted = f_new <= f_curr - 1e-4 * step * gnorm**2
        if accepted:
            for _exp in range(10):
                q_2, f_2, post_2 = _trial(step * 2)
                if f_2 < f_new:
                    step *= 2
                    q_new, f_new, post_new = q_2, f_2, post_2
                else:
                    break
        else:
            for _bt in range(10):
                step *= 0.5
                q_new, f_new, post_new = _trial(step)
                if f_new <= f_curr - 1e-4 * step * gnorm**2:
                    accepted = True
                    break
        if not accepted:
            break
        q, f_curr, post = q_new, f_new, post_new
        info.objectives.append(f_curr)
        info.accepted_steps += 1
        if f_curr < best_f:
            best_q, best_f = q, f_curr

    info.improved = info.accepted_steps > 0
    if not info.improved:
        return init, info
    return Combiner(best_q, unit_modulus=True), info
