"""Test objects, calibrated Gaussian noise, and reconstruction error metrics.

The stock phantom is a pair of balls of different intensities inside the
scanned shell, one of them cut by a thin axis-aligned slab (a crack).  Noise
is zero-mean Gaussian rescaled so the drawn sample hits the requested
signal-to-noise ratio exactly, which keeps every noisy run reproducible
from (snr_db, seed) alone.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .projector import DataTensor, Volume, VolumeGeometry

__all__ = [
    "Ball",
    "Crack",
    "PhantomSpec",
    "NoiseSpec",
    "default_phantom",
    "make_phantom",
    "add_noise",
    "nmse",
    "nmae",
]


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    intensity: float

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        if len(center) != 3:
            raise ValueError("ball center must have 3 components")
        if not (self.radius > 0):
            raise ValueError(f"ball radius must be > 0, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "intensity", float(self.intensity))


@dataclass(frozen=True)
class Crack:
    """Axis-aligned slab (lo <= coordinate <= hi) removed from one ball."""

    axis: int
    lo: float
    hi: float
    ball: int = 0

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0, 1 or 2, got {self.axis}")
        if not (self.lo < self.hi):
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class PhantomSpec:
    geometry: VolumeGeometry
    balls: tuple = ()
    crack: Crack = None

    def __post_init__(self):
        if not isinstance(self.geometry, VolumeGeometry):
            object.__setattr__(self, "geometry", VolumeGeometry(*self.geometry))
        balls = tuple(self.balls)
        for b in balls:
            if not isinstance(b, Ball):
                raise ValueError("balls must be Ball instances")
        if self.crack is not None and not (0 <= self.crack.ball < len(balls)):
            raise ValueError(f"crack refers to ball {self.crack.ball} of {len(balls)}")
        object.__setattr__(self, "balls", balls)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        snr = float(self.snr_db)
        if np.isnan(snr):
            raise ValueError("snr_db must not be NaN")
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "seed", int(self.seed))


def default_phantom(n=32):
    """Two-ball phantom with a crack, on the n^3 grid with voxel side 1/n.

    The voxel box is [1/n, 1+1/n]^2 x [1/8, 9/8]: a unit cube whose lowest
    corner sits at (1/n, 1/n, R) with R = 1/8, so the whole object stays
    strictly outside the source sphere.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    h = 1.0 / n
    geometry = VolumeGeometry((n, n, n), (h, h, 0.125), (h, h, h))
    balls = (
        Ball(center=(0.20, 0.45, 0.35), radius=0.16, intensity=1.0),
        Ball(center=(0.55, 0.17, 0.45), radius=0.13, intensity=0.55),
    )
    crack = Crack(axis=2, lo=0.34, hi=0.40, ball=0)
    return PhantomSpec(geometry=geometry, balls=balls, crack=crack)


def make_phantom(spec, r_m=None):
    """Rasterize a phantom spec: each voxel sums the intensities of the
    balls containing its center; crack-slab voxels of the cracked ball drop
    back to background.  With r_m given, warns when support reaches inside
    the shell radius r_m (such voxels are invisible to the scan).
    """
    geom = spec.geometry
    x = geom.centers(0)[:, None, None]
    y = geom.centers(1)[None, :, None]
    z = geom.centers(2)[None, None, :]
    values = np.zeros(geom.dims)
    coords = (x, y, z)
    inside_masks = []
    for b in spec.balls:
        d2 = (
            (x - b.center[0]) ** 2
            + (y - b.center[1]) ** 2
            + (z - b.center[2]) ** 2
        )
        mask = d2 <= b.radius * b.radius
        inside_masks.append(mask)
        values[mask] += b.intensity
    if spec.crack is not None and spec.balls:
        b = spec.balls[spec.crack.ball]
        c = coords[spec.crack.axis]
        slab = (c >= spec.crack.lo) & (c <= spec.crack.hi)
        slab = np.broadcast_to(slab, geom.dims)
        values[slab & inside_masks[spec.crack.ball]] -= b.intensity
    if r_m is not None:
        rad2 = np.broadcast_to(x * x + y * y + z * z, geom.dims)
        if np.any((values != 0) & (rad2 < float(r_m) ** 2)):
            warnings.warn(
                f"phantom support reaches inside r_m = {r_m}", stacklevel=2
            )
    return Volume(values, geom.origin, geom.spacing)


def add_noise(data, spec):
    """Add zero-mean Gaussian noise at an exact signal-to-noise ratio.

    The drawn sample is rescaled so 10*log10(||g||^2 / ||n||^2) equals
    spec.snr_db, hence the returned relative perturbation
    epsilon = 100 * ||g~ - g||_2 / ||g||_2 = 100 * 10^(-snr_db/20)
    holds by construction.  Returns (noisy DataTensor, epsilon percent).
    """
    g = data.values
    norm_g = np.linalg.norm(g.ravel())
    if norm_g == 0:
        raise ValueError("cannot set a signal-to-noise ratio on all-zero data")
    if np.isinf(spec.snr_db):
        return data, 0.0
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal(g.shape)
    target = norm_g * 10.0 ** (-spec.snr_db / 20.0)
    noise = z * (target / np.linalg.norm(z.ravel()))
    noisy = DataTensor(data.p, data.alpha, data.beta, g + noise)
    return noisy, 100.0 * 10.0 ** (-spec.snr_db / 20.0)


def _check_pair(f, f_tilde):
    if f.values.shape != f_tilde.values.shape:
        raise ValueError(
            f"volume shapes differ: {f.values.shape} vs {f_tilde.values.shape}"
        )


def nmse(f, f_tilde):
    """Normalized mean square error in percent:
    (100 / n_voxels) * sum (f - f~)^2 / max f^2."""
    _check_pair(f, f_tilde)
    peak = np.max(f.values * f.values)
    if peak == 0:
        raise ValueError("reference volume is identically zero")
    diff = f.values - f_tilde.values
    return 100.0 * np.sum(diff * diff) / (f.values.size * peak)


def nmae(f, f_tilde):
    """Normalized mean absolute error in percent:
    (100 / n_voxels) * sum |f - f~| / max |f|."""
    _check_pair(f, f_tilde)
    peak = np.max(np.abs(f.values))
    if peak == 0:
        raise ValueError("reference volume is identically zero")
    return 100.0 * np.sum(np.abs(f.values - f_tilde.values)) / (f.values.size * peak)
