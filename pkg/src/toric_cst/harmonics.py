"""Spherical harmonics and the discrete spherical harmonics transform.

Associated Legendre functions by stable upward recurrence, orthonormal
harmonics Y_l^m, and the forward/inverse transform (azimuthal DFT composed
with a discrete Legendre transform) on a polar-azimuthal product grid.

Conventions.  assoc_legendre includes the Condon-Shortley factor (-1)^m.
The normalization q_l^m = (-1)^m sqrt((2l+1)(l-m)!/(4pi (l+m)!)) makes
ylm = q_l^m P_l^m(cos gamma) e^{i m psi} an orthonormal basis with
Y_{l,-m} = (-1)^m conj(Y_{l,m}).  The forward transform (dsht) is the
analysis direction, returning coefficients c_lm with
F = sum c_lm ylm on band-limited data.
"""

from dataclasses import dataclass
from math import lgamma

import numpy as np

__all__ = [
    "SphereGrid",
    "HarmonicStack",
    "sphere_grid",
    "assoc_legendre",
    "qlm",
    "ylm",
    "dlt",
    "idlt",
    "dsht",
    "idsht",
    "dsht_stack",
    "idsht_stack",
]


@dataclass(frozen=True)
class SphereGrid:
    """Product grid on the sphere: polar nodes t_k = cos(theta_k) with
    quadrature weights w_k, and 2N+1 uniform azimuth nodes.

    Arrays are ordered by ascending theta (descending t).
    """

    N: int
    theta: np.ndarray
    t: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    kind: str

    @property
    def n_theta(self):
        return len(self.theta)


def sphere_grid(N, n_theta=None, kind="gauss"):
    """Build the sphere grid for expansion order N.

    Parameters
    ----------
    N : int
        Expansion order; the azimuth grid has 2N+1 uniform nodes.
    n_theta : int, optional
        Number of polar nodes; defaults to N+1, the minimum for exact
        Gauss-Legendre integration of degree-2N integrands.
    kind : str
        "gauss": Gauss-Legendre nodes in t = cos(theta) with exact weights.
        "uniform": midpoint-uniform theta with sine-scaled weights; cheaper
        to realize on hardware but only approximately orthogonal.
    """
    if n_theta is None:
        n_theta = N + 1
    if kind == "gauss":
        t, w = np.polynomial.legendre.leggauss(n_theta)
        t, w = t[::-1].copy(), w[::-1].copy()  # ascending theta
        theta = np.arccos(t)
    elif kind == "uniform":
        theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
        t = np.cos(theta)
        w = np.sin(theta) * np.pi / n_theta
    else:
        raise ValueError(f"unknown polar node kind {kind!r}")
    phi = 2.0 * np.pi * np.arange(2 * N + 1) / (2 * N + 1)
    return SphereGrid(N=N, theta=theta, t=t, w=w, phi=phi, kind=kind)


def _plm_rows(m, lmax, x):
    """Unnormalized P_l^m(x) (Condon-Shortley included) for l = m..lmax.

    Returns array of shape (lmax - m + 1,) + x.shape.  Upward recurrence in
    the degree, stable on [-1, 1].
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    rows = np.empty((lmax - m + 1,) + x.shape)
    pmm = np.ones_like(x)
    for i in range(1, m + 1):
        pmm = pmm * (-(2 * i - 1)) * s
    rows[0] = pmm
    if lmax > m:
        rows[1] = x * (2 * m + 1) * pmm
    for l in range(m + 2, lmax + 1):
        rows[l - m] = (
            (2 * l - 1) * x * rows[l - m - 1] - (l + m - 1) * rows[l - m - 2]
        ) / (l - m)
    return rows


def assoc_legendre(l, m, x):
    """Associated Legendre function P_l^m(x) with the Condon-Shortley phase.

    Parameters
    ----------
    l, m : int
        Degree and order, 0 <= m <= l.
    x : float or array
        Argument in [-1, 1].
    """
    if m < 0 or m > l:
        raise ValueError(f"order must satisfy 0 <= m <= l, got l={l}, m={m}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("argument must lie in [-1, 1]")
    out = _plm_rows(m, l, x)[-1]
    return out if out.shape else float(out)


def qlm(l, m):
    """Normalization q_l^m = (-1)^m sqrt((2l+1)(l-m)!/(4pi (l+m)!)).

    Valid for any |m| <= l (negative m handled by the same formula).
    """
    if abs(m) > l:
        raise ValueError(f"need |m| <= l, got l={l}, m={m}")
    sign = -1.0 if m % 2 else 1.0
    log_ratio = lgamma(l - m + 1) - lgamma(l + m + 1)
    return sign * np.sqrt((2 * l + 1) / (4.0 * np.pi)) * np.exp(0.5 * log_ratio)


def ylm(l, m, gamma, psi):
    """Orthonormal spherical harmonic of degree l, order m at (gamma, psi)."""
    if abs(m) > l:
        raise ValueError(f"need |m| <= l, got l={l}, m={m}")
    gamma = np.asarray(gamma, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if m < 0:
        sign = -1.0 if m % 2 else 1.0
        return sign * np.conj(ylm(l, -m, gamma, psi))
    plm = assoc_legendre(l, m, np.cos(gamma))
    return qlm(l, m) * plm * np.exp(1j * m * psi)


def _plm_rows_normalized(m, lmax, x):
    """q_l^m P_l^m(x) for l = m..lmax (m >= 0), fully normalized recurrence.

    Bounded values throughout, usable at high degrees where the raw P_l^m
    overflow; near the poles the seed underflows to zero harmlessly.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    rows = np.empty((lmax - m + 1,) + x.shape)
    pmm = np.full_like(x, 1.0 / np.sqrt(4.0 * np.pi))
    for i in range(1, m + 1):
        pmm = pmm * s * np.sqrt((2 * i + 1) / (2.0 * i))
    rows[0] = pmm
    if lmax > m:
        rows[1] = x * np.sqrt(2 * m + 3.0) * pmm
    for l in range(m + 2, lmax + 1):
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
        b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
        rows[l - m] = a * (x * rows[l - m - 1] - b * rows[l - m - 2])
    return rows


class _Transform:
    """Precomputed Legendre tables for one (N, n_theta, kind) grid."""

    def __init__(self, grid):
        self.grid = grid
        N = grid.N
        # tables[m][i, k] = q_l^m P_l^m(t_k) with l = m + i, for m >= 0
        self.tables = [_plm_rows_normalized(m, N, grid.t) for m in range(N + 1)]

    def table(self, m):
        """Normalized Legendre rows for order m (any sign), l = |m|..N."""
        rows = self.tables[abs(m)]
        if m >= 0 or m % 2 == 0:
            return rows
        return -rows  # q_{l,-m} P_l^{-m} = (-1)^m q_lm P_l^m


_transform_cache = {}


def _transform_for(grid):
    key = (grid.N, grid.n_theta, grid.kind)
    tr = _transform_cache.get(key)
    if tr is None or tr.grid is not grid and not np.array_equal(tr.grid.t, grid.t):
        tr = _Transform(grid)
        _transform_cache[key] = tr
    return tr


def dlt(values, m, grid):
    """Discrete Legendre transform (analysis) for fixed order m.

    Maps samples at the polar nodes to coefficients over l = |m|..N,
    c_l = 2pi sum_k w_k v_k q_l^m P_l^m(t_k).  Returns an array of length
    N+1 with zeros below l = |m|.
    """
    values = np.asarray(values)
    grid_n = grid.n_theta
    if values.shape[-1] != grid_n:
        raise ValueError(
            f"expected {grid_n} polar samples, got {values.shape[-1]}"
        )
    if abs(m) > grid.N:
        raise ValueError(f"|m| must not exceed N={grid.N}")
    rows = _transform_for(grid).table(m)
    coeffs = np.zeros(values.shape[:-1] + (grid.N + 1,), dtype=values.dtype)
    coeffs[..., abs(m):] = 2.0 * np.pi * (values * grid.w) @ rows.T
    return coeffs


def idlt(coeffs, m, grid):
    """Inverse discrete Legendre transform (synthesis) for fixed order m.

    Maps coefficients over l = |m|..N back to values at the polar nodes,
    v_k = sum_l c_l q_l^m P_l^m(t_k).
    """
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-1] != grid.N + 1:
        raise ValueError(f"expected {grid.N + 1} coefficients, got "
                         f"{coeffs.shape[-1]}")
    rows = _transform_for(grid).table(m)
    return coeffs[..., abs(m):] @ rows


def dsht_stack(frames, grid):
    """Forward transform of a stack of sphere frames.

    Parameters
    ----------
    frames : array (..., n_theta, 2N+1)
        Samples F[theta_k, phi_n] in the trailing two axes.
    grid : SphereGrid

    Returns
    -------
    array (..., N+1, 2N+1), complex
        Coefficients c[l, N+m]; entries with |m| > l are zero.
    """
    frames = np.asarray(frames)
    N = grid.N
    n_phi = 2 * N + 1
    if frames.shape[-2:] != (grid.n_theta, n_phi):
        raise ValueError(
            f"expected trailing shape {(grid.n_theta, n_phi)}, "
            f"got {frames.shape[-2:]}"
        )
    fhat = np.fft.fft(frames, axis=-1) / n_phi
    out = np.zeros(frames.shape[:-2] + (N + 1, n_phi), dtype=complex)
    for m in range(-N, N + 1):
        col = fhat[..., m % n_phi]
        out[..., :, N + m] = dlt(col, m, grid)
    return out


def idsht_stack(coeffs, grid):
    """Inverse of dsht_stack; returns complex frames (..., n_theta, 2N+1)."""
    coeffs = np.asarray(coeffs)
    N = grid.N
    n_phi = 2 * N + 1
    if coeffs.shape[-2:] != (N + 1, n_phi):
        raise ValueError(
            f"expected trailing shape {(N + 1, n_phi)}, got {coeffs.shape[-2:]}"
        )
    fhat = np.zeros(coeffs.shape[:-2] + (grid.n_theta, n_phi), dtype=complex)
    for m in range(-N, N + 1):
        fhat[..., m % n_phi] = idlt(coeffs[..., :, N + m], m, grid)
    return np.fft.ifft(fhat, axis=-1) * n_phi


def dsht(frame, grid):
    """Forward discrete spherical harmonics transform of one sphere frame.

    frame has shape (n_theta, 2N+1); returns complex coefficients
    (N+1, 2N+1) with order m stored at column N+m.
    """
    return dsht_stack(frame, grid)


def idsht(coeffs, grid):
    """Inverse discrete spherical harmonics transform of one coefficient set."""
    return idsht_stack(coeffs, grid)


@dataclass
class HarmonicStack:
    """Coefficients c_lm(x_i) of a function of (radius, sphere direction).

    coeffs has shape (N+1, 2N+1, N_r), complex; order m of degree l lives at
    coeffs[l, N+m, :], entries with |m| > l are identically zero.
    """

    N: int
    coeffs: np.ndarray

    def __post_init__(self):
        expected = (self.N + 1, 2 * self.N + 1)
        if self.coeffs.ndim != 3 or self.coeffs.shape[:2] != expected:
            raise ValueError(
                f"coeffs must have shape {expected + ('N_r',)}, "
                f"got {self.coeffs.shape}"
            )

    @classmethod
    def zeros(cls, N, n_r):
        return cls(N=N, coeffs=np.zeros((N + 1, 2 * N + 1, n_r), dtype=complex))

    @property
    def n_r(self):
        return self.coeffs.shape[2]

    def get(self, l, m):
        if abs(m) > l or l > self.N:
            raise ValueError(f"need |m| <= l <= N, got l={l}, m={m}")
        return self.coeffs[l, self.N + m]

    def set(self, l, m, values):
        if abs(m) > l or l > self.N:
            raise ValueError(f"need |m| <= l <= N, got l={l}, m={m}")
        self.coeffs[l, self.N + m] = values

    def reality_residual(self):
        """Max deviation from c_{l,-m} = (-1)^m conj(c_{l,m})."""
        worst = 0.0
        for l in range(self.N + 1):
            for m in range(l + 1):
                sign = -1.0 if m % 2 else 1.0
                dev = np.max(np.abs(
                    self.get(l, -m) - sign * np.conj(self.get(l, m))
                ))
                worst = max(worst, float(dev))
        return worst
