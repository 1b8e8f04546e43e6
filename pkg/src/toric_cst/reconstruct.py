"""Regularized inversion of toric-surface projection data.

The data tensor is reduced sphere by sphere to spherical-harmonic
coefficients, each (l, m) mode is recovered from its own lower-triangular
system through Tikhonov-regularized normal equations, the modes are
synthesized back onto the spherical solution grid, and the field is
resampled onto a Cartesian voxel grid by trilinear interpolation in
(r, theta, phi).

All per-mode solves are independent: the Cholesky factor of
A_l^T A_l + lambda I is computed once per degree l and reused for the
2l+1 orders, each of which is a separate right-hand side.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .harmonics import dsht_stack, idsht_stack, sphere_grid
from .projector import Volume, VolumeGeometry

__all__ = [
    "ReconResult",
    "tikhonov_solve",
    "solve_modes",
    "spherical_to_cartesian",
    "reconstruct",
]


@dataclass(frozen=True)
class ReconResult:
    """Reconstruction output bundle.

    volume holds the recovered field on the requested voxel grid;
    residuals[l, N+m] is the normal-equation residual norm
    ||(A_l^T A_l + lam I) f_lm - A_l^T g_lm||_2 of the (l, m) solve
    (zero at the unused slots |m| > l); timings maps pipeline stage
    names to wall-clock seconds.
    """

    volume: Volume
    residuals: np.ndarray
    lam: float
    timings: dict

    def __post_init__(self):
        residuals = np.asarray(self.residuals, dtype=np.float64)
        if residuals.ndim != 2 or residuals.shape[1] != 2 * residuals.shape[0] - 1:
            raise ValueError(
                f"residuals must have shape (N+1, 2N+1), got {residuals.shape}"
            )
        if np.any(residuals < 0) or not np.all(np.isfinite(residuals)):
            raise ValueError("residual norms must be finite and nonnegative")
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "lam", float(self.lam))


def tikhonov_solve(a, g, lam):
    """Solve (a^T a + lam I) f = a^T g by dense Cholesky factorization.

    g may be real or complex; a must be a real square matrix.  For lam > 0
    the normal matrix is symmetric positive definite and the factorization
    always succeeds; for lam = 0 a numerically singular a^T a raises
    scipy's LinAlgError.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    g = np.asarray(g)
    if g.shape != (a.shape[0],):
        raise ValueError(f"vector length {g.shape} does not match {a.shape}")
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"regularization parameter must be >= 0, got {lam}")
    ata = a.T @ a
    ata[np.diag_indices_from(ata)] += lam
    factor = cho_factor(ata)
    rhs = a.T @ g
    if np.iscomplexobj(rhs):
        stacked = cho_solve(factor, np.column_stack([rhs.real, rhs.imag]))
        return stacked[:, 0] + 1j * stacked[:, 1]
    return cho_solve(factor, rhs)


def solve_modes(g_coef, matrices, lam):
    """Per-mode Tikhonov inversion of a coefficient stack.

    g_coef has shape (M, N+1, 2N+1): the radial profile of each harmonic
    coefficient of the data, indexed [p_j, l, N+m].  Returns (f_coef,
    residuals) where f_coef has the same layout on the solution radii and
    residuals[l, N+m] = ||(A_l^T A_l + lam I) f_lm - A_l^T g_lm||_2.
    """
    g_coef = np.asarray(g_coef, dtype=np.complex128)
    m_size = matrices.p_grid.size
    n_modes = matrices.n_modes
    n_big = matrices.matrices.shape[2]
    expected = (m_size, n_modes, 2 * n_modes - 1)
    if g_coef.shape != expected:
        raise ValueError(f"coefficient stack {g_coef.shape}, expected {expected}")
    if n_big != m_size:
        raise ValueError("matrix set rows do not match its p grid")
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"regularization parameter must be >= 0, got {lam}")
    nn = n_modes - 1
    f_coef = np.zeros_like(g_coef)
    residuals = np.zeros((n_modes, 2 * n_modes - 1))
    for l in range(n_modes):
        a = matrices.get(l)
        ata = a.T @ a
        ata[np.diag_indices_from(ata)] += lam
        factor = cho_factor(ata)
        block = g_coef[:, l, nn - l : nn + l + 1]
        rhs = a.T @ block
        k = 2 * l + 1
        stacked = cho_solve(factor, np.hstack([rhs.real, rhs.imag]))
        sol = stacked[:, :k] + 1j * stacked[:, k:]
        f_coef[:, l, nn - l : nn + l + 1] = sol
        residuals[l, nn - l : nn + l + 1] = np.linalg.norm(ata @ sol - rhs, axis=0)
    return f_coef, residuals


def spherical_to_cartesian(field, r, theta, phi, geometry):
    """Trilinear resampling of a spherical-grid field onto voxels.

    field has shape (len(r), len(theta), len(phi)) with r strictly
    increasing, theta ascending in (0, pi), and phi the uniform azimuth
    grid starting at 0.  Voxel centers with radius outside [r[0], r[-1]]
    read as zero; the polar coordinate is clamped to the theta range
    (the quadrature nodes exclude the poles) and the azimuth wraps.
    """
    field = np.asarray(field, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if field.shape != (r.size, theta.size, phi.size):
        raise ValueError(
            f"field shape {field.shape} does not match grids "
            f"({r.size}, {theta.size}, {phi.size})"
        )
    if r.size < 2 or theta.size < 2 or phi.size < 2:
        raise ValueError("each spherical axis needs at least two nodes")
    if not isinstance(geometry, VolumeGeometry):
        geometry = VolumeGeometry(*geometry)

    x = geometry.centers(0)[:, None, None]
    y = geometry.centers(1)[None, :, None]
    z = geometry.centers(2)[None, None, :]
    rad = np.sqrt(x * x + y * y + z * z)
    inside = (rad >= r[0]) & (rad <= r[-1])
    safe = np.where(rad > 0, rad, 1.0)
    pol = np.arccos(np.clip(z / safe, -1.0, 1.0))
    az = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    pol, az = np.broadcast_arrays(pol, az)

    i0 = np.clip(np.searchsorted(r, rad, side="right") - 1, 0, r.size - 2)
    tr = np.clip((rad - r[i0]) / (r[i0 + 1] - r[i0]), 0.0, 1.0)

    pol_c = np.clip(pol, theta[0], theta[-1])
    j0 = np.clip(np.searchsorted(theta, pol_c, side="right") - 1, 0, theta.size - 2)
    tt = np.clip((pol_c - theta[j0]) / (theta[j0 + 1] - theta[j0]), 0.0, 1.0)

    dphi = 2.0 * np.pi / phi.size
    k0 = np.floor(az / dphi).astype(np.intp)
    tp = az / dphi - k0
    k0 = np.mod(k0, phi.size)
    k1 = np.mod(k0 + 1, phi.size)

    out = np.zeros(geometry.dims)
    for di, wi in ((0, 1.0 - tr), (1, tr)):
        for dj, wj in ((0, 1.0 - tt), (1, tt)):
            w_ij = wi * wj
            out += w_ij * (1.0 - tp) * field[i0 + di, j0 + dj, k0]
            out += w_ij * tp * field[i0 + di, j0 + dj, k1]
    out[~inside] = 0.0
    return Volume(out, geometry.origin, geometry.spacing)


def reconstruct(data, matrices, config, geometry):
    """Full inversion pipeline from a data tensor to a Cartesian volume.

    Stages: harmonic analysis of every p-sphere, one regularized solve per
    (l, m) mode with lam = config.lam, harmonic synthesis on the solution
    radii, and spherical-to-Cartesian interpolation onto geometry.
    """
    grid = sphere_grid(config.N, n_theta=config.N_beta, kind=config.polar_nodes)
    m_size = matrices.p_grid.size
    if data.values.shape != (m_size, grid.phi.size, grid.n_theta):
        raise ValueError(
            f"data shape {data.values.shape} does not match matrices and "
            f"config ({m_size}, {grid.phi.size}, {grid.n_theta})"
        )
    if not np.allclose(data.p, matrices.p_grid, rtol=1e-12, atol=0):
        raise ValueError("data p grid does not match the matrix set")
    if not (
        np.allclose(data.alpha, grid.phi, rtol=1e-12, atol=1e-15)
        and np.allclose(data.beta, grid.theta, rtol=1e-12, atol=1e-15)
    ):
        raise ValueError("data angular grids do not match the scan config")
    if config.N + 1 != matrices.n_modes:
        raise ValueError(
            f"matrix set holds {matrices.n_modes} degrees, config wants {config.N + 1}"
        )

    timings = {}
    t0 = time.perf_counter()
    g_coef = dsht_stack(np.swapaxes(data.values, 1, 2), grid)
    timings["analysis"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    f_coef, residuals = solve_modes(g_coef, matrices, config.lam)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    f_sph = idsht_stack(f_coef, grid).real
    timings["synthesis"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    volume = spherical_to_cartesian(
        f_sph, matrices.p_grid, grid.theta, grid.phi, geometry
    )
    timings["interpolation"] = time.perf_counter() - t0

    return ReconResult(
        volume=volume, residuals=residuals, lam=config.lam, timings=timings
    )
