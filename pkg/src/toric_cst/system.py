"""Discretization of the per-mode radial integral equation into matrices.

Product integration on the grid r_q = R + q (r_M_star - R)/M: the weakly
singular factor r/sqrt(p_j^2 - r^2) is integrated in closed form over each
cell, while the remaining smooth factor
K~_l(p, r) = sqrt(p + r) K_l(p, r)/r is replaced by its ten-point average
on the cell.  The result is one lower-triangular M x M matrix per degree l
(orders m share it), optionally cached on disk.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .kernel import kernel_direct

__all__ = [
    "KernelMatrixSet",
    "weight",
    "averaged_kernel",
    "assemble",
    "matrix_cache_path",
    "save_matrix",
    "load_matrix",
]

_N_AVG = 10
_FORMAT = "toric-cst-matrix"
_VERSION = 1


def weight(j, q, p_grid, r_grid):
    """Closed-form cell weight w_jq = int_{r_q}^{r_{q+1}} r/sqrt(p_j^2-r^2) dr.

    Row j and column q are 0-based: p = p_grid[j] and the cell is
    [r_grid[q], r_grid[q+1]] (the paper's 1-based w_{j+1,q+1}).  Zero for
    q > j; finite at q = j although the integrand is singular there.
    """
    if q > j:
        return 0.0
    p = float(p_grid[j])
    lo = float(r_grid[q])
    hi = float(r_grid[q + 1])
    return (np.sqrt(max(p * p - lo * lo, 0.0))
            - np.sqrt(max(p * p - hi * hi, 0.0)))


def _cell_samples(r_grid, q):
    lo, hi = r_grid[q], r_grid[q + 1]
    return lo + (hi - lo) * np.arange(_N_AVG) / (_N_AVG - 1)


def averaged_kernel(l, j, q, config):
    """Ten-point equidistant average of K~_l(p_j, r) over cell q.

    Sample points include both cell endpoints; the innermost cell starts
    exactly on the detector sphere (r = R), which the kernel admits.
    Raises if the cell lies above the row diameter (q > j) or any sample
    falls below R.
    """
    if q > j:
        raise ValueError(f"cell {q} lies above the diagonal of row {j}")
    r_grid = config.radial_grid()
    p = config.p_grid()[j]
    samples = _cell_samples(r_grid, q)
    if np.any(samples < config.R * (1 - 1e-12)):
        raise ValueError("averaging samples fall below the sphere radius R")
    kt = (np.sqrt(p + samples)
          * kernel_direct(p, samples, l, config.R) / samples)
    return float(kt.mean())


def assemble(l, config, cache_dir=None):
    """Assemble the lower-triangular matrix A_l (shape M x M, M = N_r).

    A_l[j, q] = w_jq * mean(K~_l) over cell q, zero strictly above the
    diagonal.  With cache_dir set, a previously assembled matrix for the
    same (R, M, r_M_star, l) is loaded instead of recomputed.
    """
    if not (0 <= l <= config.N):
        raise ValueError(f"need 0 <= l <= N={config.N}, got l={l}")
    path = None
    if cache_dir is not None:
        path = matrix_cache_path(cache_dir, config, l)
        if os.path.exists(path):
            return load_matrix(path, config=config, l=l)
    m = config.N_r
    r_grid = config.radial_grid()
    p_grid = config.p_grid()
    jj, qq = np.tril_indices(m)
    frac = np.arange(_N_AVG) / (_N_AVG - 1)
    lo = r_grid[qq]
    hi = r_grid[qq + 1]
    r_s = lo[:, None] + (hi - lo)[:, None] * frac  # (n_cells, 10)
    p_s = p_grid[jj][:, None]
    kt = np.sqrt(p_s + r_s) * kernel_direct(p_s, r_s, l, config.R) / r_s
    w = (np.sqrt(np.clip(p_grid[jj] ** 2 - lo ** 2, 0.0, None))
         - np.sqrt(np.clip(p_grid[jj] ** 2 - hi ** 2, 0.0, None)))
    a = np.zeros((m, m))
    a[jj, qq] = w * kt.mean(axis=1)
    if path is not None:
        save_matrix(path, a, config, l)
    return a


def matrix_cache_path(cache_dir, config, l):
    """Cache file path keyed by (R, M, r_M_star, l)."""
    key = f"{config.R!r}|{config.N_r}|{config.r_M_star!r}|{l}"
    tag = hashlib.sha1(key.encode()).hexdigest()[:16]
    return os.path.join(cache_dir, f"A{l:03d}_{tag}.t3m")


def save_matrix(path, a, config, l):
    """Write one matrix: JSON header line + row-major float64, little-endian."""
    a = np.asarray(a, dtype=np.float64)
    header = {
        "format": _FORMAT,
        "version": _VERSION,
        "l": int(l),
        "M": int(config.N_r),
        "R": config.R,
        "r_M_star": config.r_M_star,
    }
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_matrix(path, config=None, l=None):
    """Read a cached matrix, validating format, version and key fields."""
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    header = json.loads(line.decode())
    if header.get("format") != _FORMAT or header.get("version") != _VERSION:
        raise ValueError(f"{path}: not a version-{_VERSION} matrix file")
    m = int(header["M"])
    if config is not None:
        if (m != config.N_r or header["R"] != config.R
                or header["r_M_star"] != config.r_M_star):
            raise ValueError(f"{path}: header does not match the scan config")
    if l is not None and header["l"] != l:
        raise ValueError(f"{path}: holds l={header['l']}, expected l={l}")
    if len(payload) != m * m * 8:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f8").reshape(m, m).copy()


@dataclass(frozen=True)
class KernelMatrixSet:
    """All system matrices of one scan: A_l for l = 0..N.

    matrices has shape (N+1, M, M); each slice is lower-triangular.
    """

    R: float
    r_grid: np.ndarray
    p_grid: np.ndarray
    matrices: np.ndarray

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=np.float64)
        m = len(self.p_grid)
        if mats.ndim != 3 or mats.shape[1:] != (m, m):
            raise ValueError(f"matrices must be (N+1, {m}, {m}), "
                             f"got {mats.shape}")
        if len(self.r_grid) != m + 1:
            raise ValueError("r_grid must have one more node than p_grid")
        if not np.all(np.isfinite(mats)):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "r_grid",
                           np.asarray(self.r_grid, dtype=np.float64))
        object.__setattr__(self, "p_grid",
                           np.asarray(self.p_grid, dtype=np.float64))

    @property
    def n_modes(self):
        return self.matrices.shape[0]

    def get(self, l):
        if not (0 <= l < self.n_modes):
            raise ValueError(f"no matrix for l={l}")
        return self.matrices[l]

    @classmethod
    def build(cls, config, cache_dir=None):
        """Assemble (or load from cache) matrices for every degree l <= N."""
        mats = np.stack([
            assemble(l, config, cache_dir=cache_dir)
            for l in range(config.N + 1)
        ])
        return cls(R=config.R, r_grid=config.radial_grid(),
                   p_grid=config.p_grid(), matrices=mats)
