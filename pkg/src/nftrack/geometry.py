"""Antenna geometry and the spherical-wavefront LoS channel.

The base station is a uniform linear array along the y-axis centered at the
origin; the mobile station is a uniform linear array centered at (x, y) and
rotated by the heading psi.  Channel entries carry the exact per-element
free-space amplitude and phase; no far-field or uniform-amplitude shortcut is
used anywhere in the simulator.  The asymptotic (scaled-channel) derivative
forms exist only as a separate operation for validation.

All quantities are SI: meters, radians, Hz, Watts.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s


def antenna_indices(n: int) -> np.ndarray:
    """Signed antenna indices centered at 0.

    Odd n gives {-(n-1)/2, ..., (n-1)/2}; even n gives {-n/2, ..., n/2 - 1}.
    """
    if n < 1:
        raise ValueError(f"antenna count must be >= 1, got {n}")
    if n % 2:
        half = (n - 1) // 2
        return np.arange(-half, half + 1)
    half = n // 2
    return np.arange(-half, half)


@dataclass(frozen=True)
class ArrayConfig:
    """BS/MS array sizes and spacings.

    Spacings default to half a wavelength when not given.
    """

    n_b: int
    n_m: int
    carrier_freq: float  # Hz
    d_b: float = None
    d_m: float = None

    def __post_init__(self):
        object.__setattr__(self, "n_b", int(self.n_b))
        object.__setattr__(self, "n_m", int(self.n_m))
        object.__setattr__(self, "carrier_freq", float(self.carrier_freq))
        if self.n_b < 1 or self.n_m < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.carrier_freq <= 0:
            raise ValueError("carrier frequency must be positive")
        lam = SPEED_OF_LIGHT / self.carrier_freq
        object.__setattr__(self, "d_b", lam / 2 if self.d_b is None else float(self.d_b))
        object.__setattr__(self, "d_m", lam / 2 if self.d_m is None else float(self.d_m))
        if self.d_b <= 0 or self.d_m <= 0:
            raise ValueError("antenna spacings must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def aperture_b(self) -> float:
        return (self.n_b - 1) * self.d_b

    @property
    def aperture_m(self) -> float:
        return (self.n_m - 1) * self.d_m

    @property
    def bs_indices(self) -> np.ndarray:
        return antenna_indices(self.n_b)

    @property
    def ms_indices(self) -> np.ndarray:
        return antenna_indices(self.n_m)

    @property
    def fresnel_distance(self) -> float:
        """Boundary between the reactive and radiative near field of the BS."""
        return 0.62 * np.sqrt(self.aperture_b**3 / self.wavelength)


@dataclass(frozen=True)
class Pose:
    """Position of the MS array center plus heading w.r.t. the x-axis."""

    x: float
    y: float
    psi: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.psi)):
            raise ValueError("pose components must be finite")
        if self.x == 0.0 and self.y == 0.0:
            raise ValueError("MS cannot sit at the BS array center")

    @property
    def r(self) -> float:
        return float(np.hypot(self.x, self.y))

    @property
    def theta(self) -> float:
        return float(np.arctan2(self.y, self.x))


class ChannelDerivatives(NamedTuple):
    """Channel derivative matrices w.r.t. x (1/m), y (1/m) and psi (1/rad)."""

    j_x: np.ndarray
    j_y: np.ndarray
    j_psi: np.ndarray


@dataclass(frozen=True)
class GeometrySummary:
    r: float  # MS-BS distance, m
    theta: float  # polar angle of the MS, rad
    eta: complex  # -(1/r + j*2*pi/lambda), 1/m
    d_m_eff: float  # MS aperture projected orthogonal to the MS-BS line, m
    d_fresnel: float  # m


def pair_distance(pose: Pose, cfg: ArrayConfig, n_b_idx, n_m_idx):
    """Distance between BS antenna n_b_idx and MS antenna n_m_idx.

    Accepts scalars or broadcastable index arrays.  MS indices outside the
    physical array address virtual elements on the extended array axis.
    """
    n_b_idx = np.asarray(n_b_idx, dtype=float)
    n_m_idx = np.asarray(n_m_idx, dtype=float)
    mx = pose.x + n_m_idx * cfg.d_m * np.cos(pose.psi)
    my = pose.y + n_m_idx * cfg.d_m * np.sin(pose.psi)
    d = np.sqrt(mx**2 + (my - n_b_idx * cfg.d_b) ** 2)
    return float(d) if d.ndim == 0 else d


def _distance_grid(pose: Pose, cfg: ArrayConfig) -> np.ndarray:
    """(n_b, n_m) matrix of pairwise antenna distances."""
    return pair_distance(pose, cfg, cfg.bs_indices[:, None], cfg.ms_indices[None, :])


def channel_matrix(pose: Pose, cfg: ArrayConfig) -> np.ndarray:
    """Exact LoS channel: entry = lambda/(4*pi*r_e) * exp(-j*2*pi*r_e/lambda)."""
    lam = cfg.wavelength
    r = _distance_grid(pose, cfg)
    return lam / (4 * np.pi * r) * np.exp(-2j * np.pi / lam * r)


def channel_derivatives(pose: Pose, cfg: ArrayConfig) -> ChannelDerivatives:
    """Exact pose derivatives of the channel, via the chain rule through r_e.

    dh/dr = -lambda/(4*pi*r^2) * (1 + j*2*pi*r/lambda) * exp(-j*2*pi*r/lambda),
    and dr/dpsi combines dr/dx, dr/dy with the MS element lever arm.
    """
    lam = cfg.wavelength
    nm = cfg.ms_indices[None, :].astype(float)
    nb = cfg.bs_indices[:, None].astype(float)
    cos_psi, sin_psi = np.cos(pose.psi), np.sin(pose.psi)

    r = _distance_grid(pose, cfg)
    dh_dr = (
        -lam / (4 * np.pi * r**2) * (1 + 2j * np.pi / lam * r) * np.exp(-2j * np.pi / lam * r)
    )
    dr_dx = (pose.x + nm * cfg.d_m * cos_psi) / r
    dr_dy = (pose.y + nm * cfg.d_m * sin_psi - nb * cfg.d_b) / r
    dr_dpsi = -dr_dx * nm * cfg.d_m * sin_psi + dr_dy * nm * cfg.d_m * cos_psi
    return ChannelDerivatives(dh_dr * dr_dx, dh_dr * dr_dy, dh_dr * dr_dpsi)


def channel_derivatives_asymptotic(pose: Pose, cfg: ArrayConfig) -> ChannelDerivatives:
    """Large-array limits: position derivatives are scaled copies of the
    channel, the heading derivative is a column-scaled copy."""
    h = channel_matrix(pose, cfg)
    r = pose.r
    eta = -(1.0 / r + 2j * np.pi / cfg.wavelength)
    j_x = eta * (pose.x / r) * h
    j_y = eta * (pose.y / r) * h
    col_scale = cfg.ms_indices[None, :].astype(float)
    j_psi = eta * cfg.d_m * np.sin(pose.theta - pose.psi) * h * col_scale
    return ChannelDerivatives(j_x, j_y, j_psi)


def geometry_summary(pose: Pose, cfg: ArrayConfig) -> GeometrySummary:
    r = pose.r
    theta = pose.theta
    eta = -(1.0 / r + 2j * np.pi / cfg.wavelength)
    d_m_eff = cfg.aperture_m * abs(np.sin(theta - pose.psi))
    return GeometrySummary(
        r=r, theta=theta, eta=eta, d_m_eff=d_m_eff, d_fresnel=cfg.fresnel_distance
    )
