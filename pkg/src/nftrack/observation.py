"""Uplink pilot, compressed observation, and the observation Jacobian.

Observation noise is always drawn on the full BS array and compressed by the
combiner afterwards.  This preserves the correlated compressed-noise
covariance Q N Q^H and lets every combiner scheme in a campaign consume the
identical full-array noise realization.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimation import Combiner
from .geometry import ArrayConfig, Pose, channel_derivatives


@dataclass(frozen=True)
class Pilot:
    """Complex pilot symbols with E[x x^H] = (power / n_m) I."""

    symbols: np.ndarray
    power: float  # W


@dataclass(frozen=True)
class Observation:
    z: np.ndarray  # compressed snapshot, length = combiner rows
    y_full: Optional[np.ndarray] = None  # uncompressed snapshot, diagnostics only


def generate_pilot(rng: np.random.Generator, power_watts: float, n_m: int) -> Pilot:
    if power_watts <= 0:
        raise ValueError("pilot power must be positive")
    scale = np.sqrt(power_watts / (2 * n_m))
    symbols = scale * (rng.standard_normal(n_m) + 1j * rng.standard_normal(n_m))
    return Pilot(symbols=symbols, power=power_watts)


def observe(
    h: np.ndarray,
    pilot: Pilot,
    q: Combiner,
    noise_power: float,
    rng: np.random.Generator,
    keep_full: bool = False,
) -> Observation:
    """z = Q (H x + n) with n ~ CN(0, noise_power * I) on the full array."""
    n_b, n_m = h.shape
    if pilot.symbols.shape != (n_m,):
        raise ValueError(f"pilot length {pilot.symbols.shape} does not match channel columns {n_m}")
    if q.n_b != n_b:
        raise ValueError(f"combiner has {q.n_b} columns, channel has {n_b} rows")
    y = h @ pilot.symbols
    if noise_power > 0:
        scale = np.sqrt(noise_power / 2)
        y = y + scale * (rng.standard_normal(n_b) + 1j * rng.standard_normal(n_b))
    z = q.apply(y)
    return Observation(z=z, y_full=y if keep_full else None)


def observation_jacobian(pose: Pose, cfg: ArrayConfig, pilot: Pilot) -> np.ndarray:
    """(n_b, 5) Jacobian of H(p) x w.r.t. the state.

    Velocity columns are identically zero: a single snapshot carries no
    information about v or omega.
    """
    derivs = channel_derivatives(pose, cfg)
    b = np.zeros((cfg.n_b, 5), dtype=complex)
    b[:, 0] = derivs.j_x @ pilot.symbols
    b[:, 1] = derivs.j_y @ pilot.symbols
    b[:, 2] = derivs.j_psi @ pilot.symbols
    return b
