"""Numerical forward projection of a voxel volume onto apple-torus surfaces.

The production path (`project`) evaluates the surface integral in the
diameter labeling for every (p_j, alpha_n, beta_k) cell of a data tensor:
trapezoidal rule in gamma over the outside-sphere arc [0, 2 arccos(R/p)]
with step arccos(R/p)/N_gamma, uniform rule in psi with step 2 pi/N_psi,
and trilinear sampling of the volume (zero outside the voxel box).  The
integrand in this labeling is (p^2/R) cos(gamma - arccos(R/p)) sin(gamma),
identical to r^omega(gamma) sin(gamma)/sin(omega) of the scattering-angle
labeling under p = R/sin(omega).

`project_omega` is an independent single-surface evaluation in the omega
labeling (pure numpy), kept as a cross-check of the compiled path.
`coeff_forward_1d` evaluates the one-dimensional radial integral that the
surface integral reduces to for a single spherical-harmonic mode; it is
the oracle against which the matrix path is validated.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from scipy.integrate import quad
from scipy.special import eval_legendre

from .geometry import DetectorAngles, radial_profile, torus_point_omega
from .harmonics import sphere_grid

__all__ = [
    "Volume",
    "VolumeGeometry",
    "DataTensor",
    "project",
    "project_omega",
    "coeff_forward_1d",
    "sample_volume",
]


@dataclass(frozen=True)
class Volume:
    """Scalar field on a regular voxel grid.

    Parameters
    ----------
    values : array (n_x, n_y, n_z)
        One scalar per voxel.
    origin : (float, float, float)
        Minimum corner (x_min, y_min, z_min) of the voxel box.
    spacing : (float, float, float)
        Voxel edge lengths, all > 0.

    Voxel i holds the field value at the cell center
    origin + (i + 1/2) * spacing.  Samples outside the grid read as zero.
    The field is expected to be supported in the shell r_m <= |x| <= r_M
    of the scan; values stored outside that shell are not masked, but the
    quadrature truncations assume they vanish.
    """

    values: np.ndarray
    origin: tuple
    spacing: tuple

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError(f"values must be 3-D, got shape {values.shape}")
        origin = tuple(float(x) for x in self.origin)
        spacing = tuple(float(x) for x in self.spacing)
        if len(origin) != 3 or len(spacing) != 3:
            raise ValueError("origin and spacing must have 3 components")
        if any(d <= 0 or not np.isfinite(d) for d in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self):
        return self.values.shape

    def centers(self, axis):
        """Voxel-center coordinates along one axis (0=x, 1=y, 2=z)."""
        n = self.values.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing[axis]

    def box(self):
        """(lower, upper) corners of the voxel box."""
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.dims) * np.asarray(self.spacing)
        return lo, hi

    @property
    def geometry(self):
        return VolumeGeometry(self.dims, self.origin, self.spacing)


@dataclass(frozen=True)
class VolumeGeometry:
    """Voxel-grid shape and placement without the data payload."""

    dims: tuple
    origin: tuple
    spacing: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        origin = tuple(float(x) for x in self.origin)
        spacing = tuple(float(x) for x in self.spacing)
        if len(dims) != 3 or len(origin) != 3 or len(spacing) != 3:
            raise ValueError("dims, origin and spacing must have 3 components")
        if any(n <= 0 for n in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        if any(d <= 0 or not np.isfinite(d) for d in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    def centers(self, axis):
        """Voxel-center coordinates along one axis (0=x, 1=y, 2=z)."""
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing[axis]

    def zeros(self):
        return Volume(np.zeros(self.dims), self.origin, self.spacing)


@dataclass(frozen=True)
class DataTensor:
    """Projection data g[j][n][k] on the (p_j, alpha_n, beta_k) grid.

    p must be strictly increasing (all diameters > R by construction).
    beta follows the polar nodes of the sphere grid (ascending); note the
    spherical-transform routines expect frames indexed (beta, alpha), the
    transpose of the trailing axes here.
    """

    p: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        expected = (len(p), len(alpha), len(beta))
        if values.shape != expected:
            raise ValueError(
                f"values shape {values.shape} does not match axes {expected}"
            )
        if len(p) > 1 and np.any(np.diff(p) <= 0):
            raise ValueError("p axis must be strictly increasing")
        if np.any(p <= 0):
            raise ValueError("p axis must be positive")
        for name, arr in (("p", p), ("alpha", alpha), ("beta", beta),
                          ("values", values)):
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return self.values.shape


@njit(cache=True, inline="always")
def _trilinear(values, nx, ny, nz, u, v, w):
    # zero outside the hull of cell centers
    if u < 0.0 or v < 0.0 or w < 0.0:
        return 0.0
    if u > nx - 1.0 or v > ny - 1.0 or w > nz - 1.0:
        return 0.0
    iu = int(u)
    iv = int(v)
    iw = int(w)
    if iu > nx - 2:
        iu = nx - 2
    if iv > ny - 2:
        iv = ny - 2
    if iw > nz - 2:
        iw = nz - 2
    fu = u - iu
    fv = v - iv
    fw = w - iw
    c00 = values[iu, iv, iw] * (1.0 - fu) + values[iu + 1, iv, iw] * fu
    c10 = values[iu, iv + 1, iw] * (1.0 - fu) + values[iu + 1, iv + 1, iw] * fu
    c01 = values[iu, iv, iw + 1] * (1.0 - fu) + values[iu + 1, iv, iw + 1] * fu
    c11 = (values[iu, iv + 1, iw + 1] * (1.0 - fu)
           + values[iu + 1, iv + 1, iw + 1] * fu)
    return ((c00 * (1.0 - fv) + c10 * fv) * (1.0 - fw)
            + (c01 * (1.0 - fv) + c11 * fv) * fw)


@njit(cache=True, inline="always")
def _nearest(values, nx, ny, nz, u, v, w):
    # zero outside the voxel box
    if u < -0.5 or v < -0.5 or w < -0.5:
        return 0.0
    if u > nx - 0.5 or v > ny - 0.5 or w > nz - 0.5:
        return 0.0
    iu = int(u + 0.5)
    iv = int(v + 0.5)
    iw = int(w + 0.5)
    if iu > nx - 1:
        iu = nx - 1
    if iv > ny - 1:
        iv = ny - 1
    if iw > nz - 1:
        iw = nz - 1
    return values[iu, iv, iw]


@njit(parallel=True, fastmath=True, cache=True)
def _project_core(values, ox, oy, oz, dx, dy, dz,
                  p, alpha, beta, R, n_gamma, cos_psi, sin_psi, nearest):
    n_p = p.shape[0]
    n_a = alpha.shape[0]
    n_b = beta.shape[0]
    n_psi = cos_psi.shape[0]
    nx, ny, nz = values.shape
    n_nodes = 2 * n_gamma + 1
    out = np.zeros((n_p, n_a, n_b))
    for det in prange(n_a * n_b):
        n = det // n_b
        k = det % n_b
        ca = math.cos(alpha[n])
        sa = math.sin(alpha[n])
        cb = math.cos(beta[k])
        sb = math.sin(beta[k])
        # columns of u(alpha) a(beta): local frame of this detector
        e0x = ca * cb
        e0y = sa * cb
        e0z = -sb
        e1x = -sa
        e1y = ca
        e2x = ca * sb
        e2y = sa * sb
        e2z = cb
        for j in range(n_p):
            pj = p[j]
            c = math.acos(R / pj)
            dg = c / n_gamma
            acc = 0.0
            for t in range(1, n_nodes):  # integrand vanishes at gamma = 0
                gamma = t * dg
                cgc = math.cos(gamma - c)
                sg = math.sin(gamma)
                cg = math.cos(gamma)
                wq = (pj * pj / R) * cgc * sg * dg
                if t == n_nodes - 1:
                    wq *= 0.5
                rad = pj * cgc
                bx = rad * cg * e2x
                by = rad * cg * e2y
                bz = rad * cg * e2z
                rs = rad * sg
                ring = 0.0
                for s in range(n_psi):
                    px = bx + rs * (cos_psi[s] * e0x + sin_psi[s] * e1x)
                    py = by + rs * (cos_psi[s] * e0y + sin_psi[s] * e1y)
                    pz = bz + rs * cos_psi[s] * e0z
                    u = (px - ox) / dx - 0.5
                    v = (py - oy) / dy - 0.5
                    w = (pz - oz) / dz - 0.5
                    if nearest:
                        ring += _nearest(values, nx, ny, nz, u, v, w)
                    else:
                        ring += _trilinear(values, nx, ny, nz, u, v, w)
                acc += wq * ring
            out[j, n, k] = acc * (2.0 * math.pi / n_psi)
    return out


def sample_volume(volume, points, interp="trilinear"):
    """Sample a Volume at arbitrary Cartesian points, zero outside the box.

    points has shape (..., 3); returns an array of the leading shape.
    Reference numpy implementation of the sampling rule used by the
    compiled projector.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[-1] != 3:
        raise ValueError("points must have a trailing axis of length 3")
    vals = volume.values
    shape = points.shape[:-1]
    pts = points.reshape(-1, 3)
    g = (pts - np.asarray(volume.origin)) / np.asarray(volume.spacing) - 0.5
    out = np.zeros(len(pts))
    if interp == "nearest":
        dims = np.asarray(vals.shape)
        inside = np.all((g >= -0.5) & (g <= dims - 0.5), axis=1)
        idx = np.minimum(np.floor(g[inside] + 0.5).astype(np.int64), dims - 1)
        out[inside] = vals[idx[:, 0], idx[:, 1], idx[:, 2]]
        return out.reshape(shape)
    if interp != "trilinear":
        raise ValueError(f"unknown interpolation {interp!r}")
    dims = np.asarray(vals.shape)
    inside = np.all((g >= 0.0) & (g <= dims - 1.0), axis=1)
    gi = g[inside]
    cell = np.minimum(gi.astype(np.int64), dims - 2)
    f = gi - cell
    iu, iv, iw = cell[:, 0], cell[:, 1], cell[:, 2]
    fu, fv, fw = f[:, 0], f[:, 1], f[:, 2]
    c00 = vals[iu, iv, iw] * (1 - fu) + vals[iu + 1, iv, iw] * fu
    c10 = vals[iu, iv + 1, iw] * (1 - fu) + vals[iu + 1, iv + 1, iw] * fu
    c01 = vals[iu, iv, iw + 1] * (1 - fu) + vals[iu + 1, iv, iw + 1] * fu
    c11 = vals[iu, iv + 1, iw + 1] * (1 - fu) + vals[iu + 1, iv + 1, iw + 1] * fu
    out[inside] = ((c00 * (1 - fv) + c10 * fv) * (1 - fw)
                   + (c01 * (1 - fv) + c11 * fv) * fw)
    return out.reshape(shape)


def project(volume, config, interp="trilinear"):
    """Forward-project a volume onto the full (p, alpha, beta) grid.

    The alpha axis holds the 2N+1 uniform azimuth nodes and the beta axis
    the polar nodes of the sphere grid selected by config.polar_nodes, so
    the output is directly consumable by the spherical transform.  Values
    carry the surface-measure normalization of the omega labeling.
    """
    if interp not in ("trilinear", "nearest"):
        raise ValueError(f"unknown interpolation {interp!r}")
    p = config.p_grid()
    if p[0] <= config.R:
        raise ValueError("p grid extends to <= R; check r_M_star and N_r")
    grid = sphere_grid(config.N, n_theta=config.N_beta,
                       kind=config.polar_nodes)
    psi = 2.0 * np.pi * np.arange(config.N_psi) / config.N_psi
    out = _project_core(
        volume.values,
        volume.origin[0], volume.origin[1], volume.origin[2],
        volume.spacing[0], volume.spacing[1], volume.spacing[2],
        np.ascontiguousarray(p),
        np.ascontiguousarray(grid.phi),
        np.ascontiguousarray(grid.theta),
        float(config.R), int(config.N_gamma),
        np.cos(psi), np.sin(psi), int(interp == "nearest"),
    )
    return DataTensor(p=p, alpha=grid.phi, beta=grid.theta, values=out)


def project_omega(volume, omega, angles, config, interp="trilinear"):
    """Surface integral over the single torus (omega, angles).

    Trapezoidal rule in gamma over [0, 2 omega - pi] with 2 N_gamma + 1
    nodes, uniform rule in psi; integrand r^omega(gamma) sin(gamma) /
    sin(omega).  Matches the corresponding cell of `project` at
    p = R/sin(omega) up to floating-point roundoff.
    """
    if not (np.pi / 2 < omega < np.pi):
        raise ValueError(f"omega must lie in (pi/2, pi), got {omega}")
    if not isinstance(angles, DetectorAngles):
        angles = DetectorAngles(*angles)
    c = omega - np.pi / 2
    n_nodes = 2 * config.N_gamma + 1
    gamma = np.linspace(0.0, 2.0 * c, n_nodes)
    dg = c / config.N_gamma
    trap = np.full(n_nodes, dg)
    trap[0] = trap[-1] = 0.5 * dg
    r = radial_profile(omega, gamma, config.R)
    w_gamma = r * np.sin(gamma) / np.sin(omega) * trap
    psi = 2.0 * np.pi * np.arange(config.N_psi) / config.N_psi
    pts = torus_point_omega(omega, angles, gamma[:, None], psi[None, :],
                            config.R)
    vals = sample_volume(volume, pts, interp=interp)
    return float(w_gamma @ vals.sum(axis=1) * (2.0 * np.pi / config.N_psi))


def coeff_forward_1d(f_lm, l, p_grid, config):
    """Radial data coefficients of one spherical-harmonic mode.

    Evaluates, for each p in p_grid, the adaptive-quadrature integral

        2 pi (p^2/R) * int_0^{2c} cos(g - c) sin(g) f_lm(p cos(g - c))
                                  P_l(cos g) dg,   c = arccos(R/p),

    the one-dimensional reduction of the surface integral for mode (l, m)
    (independent of m).  Serves as the oracle for the algebraic path.

    Parameters
    ----------
    f_lm : callable or (radii, values) pair
        Radial coefficient profile; a sample pair is interpolated
        linearly and reads zero outside its node range.
    l : int
        Degree, 0 <= l <= config.N.
    p_grid : array
        Diameters, all > config.R.
    config : ScanConfig
    """
    if not (0 <= l <= config.N):
        raise ValueError(f"need 0 <= l <= N={config.N}, got l={l}")
    if callable(f_lm):
        f = f_lm
    else:
        radii, fvals = (np.asarray(a, dtype=float) for a in f_lm)
        if radii.shape != fvals.shape or radii.ndim != 1:
            raise ValueError("sample pair must be two equal-length 1-D arrays")

        def f(r):
            return np.interp(r, radii, fvals, left=0.0, right=0.0)

    p_grid = np.atleast_1d(np.asarray(p_grid, dtype=float))
    R = float(config.R)
    if np.any(p_grid <= R):
        raise ValueError("all p must exceed R")
    out = np.zeros(p_grid.shape)
    for i, p in enumerate(p_grid):
        c = math.acos(R / p)

        def integrand(g):
            return (math.cos(g - c) * math.sin(g)
                    * float(f(p * math.cos(g - c)))
                    * eval_legendre(l, math.cos(g)))

        # kinks where the surface crosses the support shell boundaries
        brk = sorted(
            c + s * math.acos(rb / p)
            for rb in (config.r_m, config.r_M) if rb < p
            for s in (-1.0, 1.0)
        )
        brk = [x for x in brk if 0.0 < x < 2.0 * c]
        val, _ = quad(integrand, 0.0, 2.0 * c, points=brk or None,
                      limit=200, epsabs=1e-10, epsrel=1e-10)
        out[i] = 2.0 * np.pi * p * p / R * val
    return out
