"""The Abel-type kernel K_l(p, r) and its invertibility diagnostics.

Two algebraically equivalent evaluations are kept deliberately separate:
kernel_direct uses the arcsin/Legendre form, kernel_expanded the regrouped
polynomial form whose terms carry only integer powers of (p - r), which is
the form suitable for differentiation across the diagonal.  Diagnostics
locate the diagonal zeros r0 (mapped Legendre roots) and certify the
gradient condition 1 + k1/(2(k1+k2)) = 2 at each of them.
"""

from typing import NamedTuple

import numpy as np

__all__ = [
    "QFactors",
    "q_factors",
    "legendre_p",
    "legendre_derivatives",
    "kernel_direct",
    "kernel_expanded",
    "kernel_diagonal",
    "diagonal_roots",
    "gradient_components",
    "gradient_ratio",
]


class QFactors(NamedTuple):
    Q1: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray
    Q4: np.ndarray


def _check_domain(p, r, R, allow_r_above_p=False):
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    if R <= 0:
        raise ValueError(f"R must be positive, got {R}")
    if np.any(p <= R):
        raise ValueError("p must exceed R")
    if np.any(r < R * (1 - 1e-12)):
        raise ValueError("r must not fall below R")
    if not allow_r_above_p and np.any(r > p * (1 + 1e-12)):
        raise ValueError("r must not exceed p")
    return p, r


def q_factors(p, r, R):
    """Geometry factors Q1..Q4 of the kernel, elementwise over p, r.

    Valid on R <= r <= p (the lower radial grid point sits exactly on the
    detector sphere, so r = R is admitted).
    """
    p, r = _check_domain(p, r, R)
    root = np.sqrt(p * p - R * R)
    q1 = 2.0 * np.pi * r * r * root / (R * p * np.sqrt(p + r))
    q2 = 2.0 * np.pi * r / p
    q3 = root * np.sqrt(p + r) / (p * p)
    q4 = R * r / (p * p)
    return QFactors(q1, q2, q3, q4)


def legendre_p(l, x):
    """Legendre polynomial P_l(x) by the three-term recurrence.

    The input dtype is preserved for floating types, so extended-precision
    evaluation is available where cancellation matters.
    """
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    if l == 0:
        return np.ones_like(x)
    prev = np.ones_like(x)
    cur = x.copy()
    for k in range(2, l + 1):
        prev, cur = cur, ((2 * k - 1) * x * cur - (k - 1) * prev) / k
    return cur


def legendre_derivatives(l, x, kmax):
    """Factorial-scaled derivatives D_k = P_l^(k)(x)/k! for k = 0..kmax.

    Uses the differentiated Legendre equation, valid for |x| < 1:
    (1-x^2) P^(k) = 2x(k-1) P^(k-1) + ((k-2)(k-1) - l(l+1)) P^(k-2).
    The 1/k! scaling keeps every row O(1)-bounded relative to the previous
    two, avoiding factorial overflow at high degrees.
    """
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    if np.any(np.abs(x) >= 1.0):
        raise ValueError("derivative recurrence requires |x| < 1")
    big_l = l * (l + 1.0)
    out = np.zeros((kmax + 1,) + x.shape, dtype=x.dtype)
    out[0] = legendre_p(l, x)
    if kmax >= 1 and l >= 1:
        pl1 = legendre_p(l - 1, x)
        out[1] = l * (pl1 - x * out[0]) / (1.0 - x * x)
    one_m_x2 = 1.0 - x * x
    for k in range(2, min(kmax, l) + 1):
        out[k] = (
            2.0 * x * (k - 1.0) / k * out[k - 1]
            + ((k - 2.0) * (k - 1.0) - big_l) / ((k - 1.0) * k) * out[k - 2]
        ) / one_m_x2
    return out


def kernel_direct(p, r, l, R):
    """K_l(p, r) in the arcsin form,

    (2 pi / R) sum_{sigma=+-1} sigma^l p r sin(A - sigma B)/sqrt(p+r)
        * P_l(cos(B - sigma A)),

    with A = arcsin(r/p), B = arcsin(R/p).  Elementwise over p, r.
    """
    p, r = _check_domain(p, r, R)
    a = np.arcsin(np.clip(r / p, -1.0, 1.0))
    b = np.arcsin(R / p)
    pref = 2.0 * np.pi / R * p * r / np.sqrt(p + r)
    plus = pref * np.sin(a - b) * legendre_p(l, np.cos(b - a))
    minus = pref * np.sin(a + b) * legendre_p(l, np.cos(b + a))
    sign = -1.0 if l % 2 else 1.0
    return plus + sign * minus


def _kernel_expanded_raw(p, r, l, R):
    """Regrouped kernel without the triangle check; p < r is meaningful here
    (integer powers of (p - r) only), which the diagonal gradient needs.

    Accumulated in extended precision: far from the diagonal the Taylor
    terms around Q4 grow large before cancelling, and 64-bit accumulation
    would lose the 1e-9 agreement with the direct form at l near 20.
    """
    p = np.asarray(p, dtype=np.longdouble)
    r = np.asarray(r, dtype=np.longdouble)
    R = np.longdouble(R)
    root = np.sqrt(p * p - R * R)
    q1 = 2.0 * np.pi * r * r * root / (R * p * np.sqrt(p + r))
    q2 = 2.0 * np.pi * r / p
    q3 = root * np.sqrt(p + r) / (p * p)
    q4 = R * r / (p * p)
    d = legendre_derivatives(l, q4, l)
    h = p - r
    total = 2.0 * q1 * d[0]
    h_pow = np.ones_like(h)
    q3_sq = q3 * q3
    for i in range(1, l // 2 + 2):
        h_pow = h_pow * h
        k_even, k_odd = 2 * i, 2 * i - 1
        term = np.zeros_like(total)
        if k_odd <= l:
            term = term - q2 * q3 ** k_odd * d[k_odd]
        if k_even <= l:
            term = term + q1 * q3 ** k_even * d[k_even]
        if k_odd > l:
            break
        total = total + 2.0 * h_pow * term
    return np.asarray(total, dtype=float)


def kernel_expanded(p, r, l, R):
    """K_l(p, r) via the expansion in integer powers of (p - r).

    Equals kernel_direct on the triangle R <= r <= p; every term is smooth
    across the diagonal (no sqrt(p - r) factor survives the regrouping).
    """
    p, r = _check_domain(p, r, R)
    return _kernel_expanded_raw(p, r, l, R)


def kernel_diagonal(r, l, R):
    """Closed form on the diagonal,

    K_l(r, r) = (sqrt(8) pi / R) sqrt(r) sqrt(r^2 - R^2) P_l(R/r).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= R):
        raise ValueError("r must exceed R on the diagonal")
    return (
        np.sqrt(8.0) * np.pi / R
        * np.sqrt(r) * np.sqrt(r * r - R * R)
        * legendre_p(l, R / r)
    )


def diagonal_roots(l, R, r_m, r_M, tol=1e-12):
    """Radii r0 in [r_m, r_M] where the kernel diagonal vanishes.

    These are r0 = R/x for the roots x of P_l inside [R/r_M, R/r_m];
    located by sign-change bracketing on a grid finer than the minimal
    Legendre root spacing, then bisection to `tol` in x.  Returns an
    ascending list (possibly empty).
    """
    if l < 1:
        return []
    if not (0 < R < r_m <= r_M):
        raise ValueError("need 0 < R < r_m <= r_M")
    lo = max(R / r_M, 0.0)
    hi = min(R / r_m, 1.0 - 1e-15)
    if lo >= hi:
        return []
    # adjacent roots of P_l are never closer than ~7.6/l^2 in x
    n = int(np.ceil((hi - lo) * max(8, 4 * l * l))) + 2
    xs = np.linspace(lo, hi, n)
    vals = legendre_p(l, xs)
    sign = np.sign(vals)
    exact = np.nonzero(vals == 0.0)[0]
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    a, b = xs[idx], xs[idx + 1]
    fa = vals[idx]
    for _ in range(100):
        mid = 0.5 * (a + b)
        if np.all(b - a < tol):
            break
        fm = legendre_p(l, mid)
        take_left = fa * fm <= 0
        b = np.where(take_left, mid, b)
        a = np.where(take_left, a, mid)
        fa = np.where(take_left, fa, fm)
    roots_x = sorted(set(np.concatenate([0.5 * (a + b), xs[exact]]).tolist()))
    return sorted(R / x for x in roots_x)


def gradient_components(r0, l, R, h_rel=1e-5):
    """Central finite-difference gradient (k1, k2) = grad K_l at (r0, r0).

    Differences are taken on the expanded form, which continues smoothly
    across the diagonal; falls back to one-sided steps when r0 - h would
    reach the detector sphere.
    """
    h = h_rel * r0
    if r0 - h > R * (1 + 1e-9):
        k1 = (_kernel_expanded_raw(r0 + h, r0, l, R)
              - _kernel_expanded_raw(r0 - h, r0, l, R)) / (2 * h)
        k2 = (_kernel_expanded_raw(r0, r0 + h, l, R)
              - _kernel_expanded_raw(r0, r0 - h, l, R)) / (2 * h)
    else:
        mid = _kernel_expanded_raw(r0, r0, l, R)
        k1 = (_kernel_expanded_raw(r0 + h, r0, l, R) - mid) / h
        k2 = (_kernel_expanded_raw(r0, r0 + h, l, R) - mid) / h
    return float(k1), float(k2)


def gradient_ratio(r0, l, R):
    """The invertibility ratio 1 + k1/(2(k1+k2)) at a diagonal root r0.

    Equals 2 at every true root; a degenerate k1 + k2 signals that r0 is
    not actually a root of the kernel diagonal.
    """
    k1, k2 = gradient_components(r0, l, R)
    denom = k1 + k2
    scale = max(abs(k1), abs(k2), 1e-300)
    if abs(denom) < 1e-8 * scale:
        raise ValueError(
            f"degenerate gradient at r0={r0}: k1={k1}, k2={k2}; "
            "r0 does not look like a diagonal root"
        )
    return 1.0 + 0.5 * k1 / denom
