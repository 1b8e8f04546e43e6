"""Scanning geometry for fixed-source Compton tomography on a detector sphere.

Coordinates, rotations, the toric-surface parametrizations in both the
scattering-angle (omega) and circle-diameter (p) labelings, and the
conversions between them.  All angles are radians, lengths are unitless.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScanConfig",
    "DetectorAngles",
    "TorusLabel",
    "detector_position",
    "rotation_z",
    "rotation_y",
    "radial_profile",
    "torus_point_omega",
    "torus_point_p",
    "omega_to_p",
    "p_to_omega",
    "compton_energy",
]


@dataclass(frozen=True)
class ScanConfig:
    """Acquisition, discretization and regularization parameters.

    Parameters
    ----------
    R : float
        Detector-sphere radius, R > 0.
    r_m, r_M : float
        Inner/outer support radii of the object shell, R < r_m <= r_M.
    r_M_star : float
        Maximal diameter of the generating circles (upper end of the
        p grid), >= r_M.
    N : int
        Spherical-harmonics expansion order.
    N_alpha, N_beta : int
        Detector grid counts (azimuth, polar); N_alpha must equal 2N + 1.
    N_p, N_r : int
        Diameter/radial grid counts; the algebraic step identifies the
        two grids, so N_p == N_r is required.
    N_gamma, N_psi : int
        Quadrature counts of the surface integral.
    lam : float
        Tikhonov regularization weight, >= 0.
    seed : int
        Seed for all randomness (noise injection).
    polar_nodes : str
        Polar sampling of the detector sphere: "gauss" (Gauss-Legendre in
        cos beta, default) or "uniform" (uniform beta with sine weights).
    """

    R: float
    r_m: float
    r_M: float
    r_M_star: float
    N: int
    N_alpha: int
    N_beta: int
    N_p: int
    N_r: int
    N_gamma: int
    N_psi: int
    lam: float = 0.01
    seed: int = 0
    polar_nodes: str = "gauss"

    def __post_init__(self):
        if not (0.0 < self.R < self.r_m <= self.r_M <= self.r_M_star):
            raise ValueError(
                "need 0 < R < r_m <= r_M <= r_M_star, got "
                f"R={self.R}, r_m={self.r_m}, r_M={self.r_M}, "
                f"r_M_star={self.r_M_star}"
            )
        counts = {
            "N": self.N, "N_alpha": self.N_alpha, "N_beta": self.N_beta,
            "N_p": self.N_p, "N_r": self.N_r,
            "N_gamma": self.N_gamma, "N_psi": self.N_psi,
        }
        for name, n in counts.items():
            if int(n) != n or n < 1:
                raise ValueError(f"{name} must be a positive integer, got {n}")
        if self.N_alpha != 2 * self.N + 1:
            raise ValueError(
                f"N_alpha must equal 2N+1 = {2 * self.N + 1}, got {self.N_alpha}"
            )
        if self.N_p != self.N_r:
            raise ValueError(
                f"the radial and diameter grids are identified; "
                f"N_p ({self.N_p}) must equal N_r ({self.N_r})"
            )
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.polar_nodes not in ("gauss", "uniform"):
            raise ValueError(f"polar_nodes must be 'gauss' or 'uniform', got "
                             f"{self.polar_nodes!r}")

    def radial_grid(self):
        """Radii r_q = R + q (r_M_star - R)/M, q = 0..M, with M = N_r."""
        m = self.N_r
        return self.R + np.arange(m + 1) * (self.r_M_star - self.R) / m

    def p_grid(self):
        """Diameters p_j = r_j, j = 1..M (the radial grid without r_0 = R)."""
        return self.radial_grid()[1:]


@dataclass(frozen=True)
class DetectorAngles:
    """Detector direction: azimuth alpha in [0, 2pi), polar beta in [0, pi]."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < 2.0 * np.pi):
            raise ValueError(f"alpha must lie in [0, 2pi), got {self.alpha}")
        if not (0.0 <= self.beta <= np.pi):
            raise ValueError(f"beta must lie in [0, pi], got {self.beta}")


@dataclass(frozen=True)
class TorusLabel:
    """A torus labeled by generating-circle diameter p > R and detector angles."""

    p: float
    angles: DetectorAngles
    R: float = field(default=0.0)

    def __post_init__(self):
        if self.R > 0 and self.p <= self.R:
            raise ValueError(f"p must exceed R, got p={self.p}, R={self.R}")

    def omega(self):
        return p_to_omega(self.p, self.R)


def detector_position(angles, R):
    """Cartesian detector position R (cos a sin b, sin a sin b, cos b).

    Parameters
    ----------
    angles : DetectorAngles
    R : float
        Sphere radius, > 0.
    """
    if R <= 0:
        raise ValueError(f"R must be positive, got {R}")
    a, b = angles.alpha, angles.beta
    return R * np.array(
        [np.cos(a) * np.sin(b), np.sin(a) * np.sin(b), np.cos(b)]
    )


def rotation_z(alpha):
    """Rotation matrix of angle alpha about the z-axis."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_y(beta):
    """Rotation matrix of angle beta about the y-axis (sends z-hat toward x-hat)."""
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _check_gamma_range(omega, gamma):
    if not (np.pi / 2 < omega < np.pi):
        raise ValueError(f"omega must lie in (pi/2, pi), got {omega}")
    gamma = np.asarray(gamma, dtype=float)
    top = 2.0 * omega - np.pi
    if np.any(gamma < -1e-15) or np.any(gamma > top * (1 + 1e-15) + 1e-15):
        raise ValueError(f"gamma must lie in [0, 2*omega - pi] = [0, {top}]")
    return gamma


def radial_profile(omega, gamma, R):
    """Radius r^omega(gamma) = R sin(omega - gamma)/sin(omega) of the torus arc.

    Values run from R at the endpoints gamma in {0, 2 omega - pi} to the
    maximum R/sin(omega) at the apex gamma = omega - pi/2.
    """
    gamma = _check_gamma_range(omega, gamma)
    return R * np.sin(omega - gamma) / np.sin(omega)


def torus_point_omega(omega, angles, gamma, psi, R):
    """Point r^omega(gamma) u(alpha) a(beta) Theta(gamma, psi) on the torus."""
    gamma = _check_gamma_range(omega, gamma)
    r = radial_profile(omega, gamma, R)
    return _directed_point(r, angles, gamma, psi)


def torus_point_p(p, angles, gamma, psi, R):
    """Torus point in the diameter labeling: radius p cos(gamma - arccos(R/p)).

    gamma may range over [0, pi]; the portion with radius >= R (outside
    the detector sphere) is gamma in [0, 2 arccos(R/p)].
    """
    if p <= R:
        raise ValueError(f"p must exceed R, got p={p}, R={R}")
    gamma = np.asarray(gamma, dtype=float)
    r = p * np.cos(gamma - np.arccos(R / p))
    return _directed_point(r, angles, gamma, psi)


def _directed_point(r, angles, gamma, psi):
    gamma = np.asarray(gamma, dtype=float)
    psi = np.asarray(psi, dtype=float)
    theta = np.stack(
        [np.cos(psi) * np.sin(gamma),
         np.sin(psi) * np.sin(gamma),
         np.broadcast_to(np.cos(gamma), np.broadcast_shapes(gamma.shape, psi.shape)).copy()],
        axis=-1,
    )
    rot = rotation_z(angles.alpha) @ rotation_y(angles.beta)
    return np.asarray(r)[..., None] * (theta @ rot.T)


def omega_to_p(omega, R):
    """Diameter of the generating circles, p = R/sin(omega)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= np.pi / 2) or np.any(omega >= np.pi):
        raise ValueError("omega must lie in (pi/2, pi)")
    return R / np.sin(omega)


def p_to_omega(p, R):
    """Scattering angle on the backscatter branch, omega = pi - arcsin(R/p)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= R):
        raise ValueError("p must exceed R")
    return np.pi - np.arcsin(R / p)


def compton_energy(omega, e0):
    """Scattered photon energy E0 / (1 + (E0/511)(1 - cos omega)), keV."""
    if e0 <= 0:
        raise ValueError(f"E0 must be positive, got {e0}")
    return e0 / (1.0 + (e0 / 511.0) * (1.0 - np.cos(omega)))
