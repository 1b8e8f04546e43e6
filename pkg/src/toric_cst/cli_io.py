"""Command-line surface, configuration, and on-disk container formats.

Containers share one layout: an ASCII magic line ("T3FMT <version> <kind>"),
one JSON header line describing the payload blocks, then the raw blocks as
little-endian 64-bit floats (complex stored as pairs).  Headers are
human-inspectable with `head -2`; payloads roundtrip bit-for-bit.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O or format
error, 4 numerical failure.  Every producing subcommand writes a
`<output>.manifest.json` describing the run (config snapshot and hash,
package version, RNG algorithm and seed, stage timings).
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError

from . import __version__
from .geometry import ScanConfig
from .harmonics import HarmonicStack, dsht_stack, idsht_stack, sphere_grid, ylm
from .kernel import (
    diagonal_roots,
    gradient_ratio,
    kernel_diagonal,
    kernel_direct,
    kernel_expanded,
)
from .phantom_metrics import (
    Ball,
    Crack,
    NoiseSpec,
    PhantomSpec,
    add_noise,
    default_phantom,
    make_phantom,
    nmae,
    nmse,
)
from .projector import DataTensor, Volume, VolumeGeometry, project
from .reconstruct import reconstruct
from .system import KernelMatrixSet
from .system import matrix_cache_path as _matrix_cache_path

__all__ = [
    "ConfigError",
    "FormatError",
    "NumericalError",
    "RunManifest",
    "load_config",
    "scan_config_from",
    "phantom_spec_from",
    "noise_spec_from",
    "write_volume",
    "read_volume",
    "write_data",
    "read_data",
    "write_harmonics",
    "read_harmonics",
    "write_matrix_set",
    "read_matrix_set",
    "slice_export",
    "main",
]

_MAGIC = "T3FMT"
_IO_VERSION = 1


class ConfigError(ValueError):
    """Bad configuration document or parameter combination (exit 2)."""


class FormatError(ValueError):
    """Unreadable or mismatched container file (exit 3)."""


class NumericalError(RuntimeError):
    """A numerical stage failed or produced non-finite values (exit 4)."""


# ---------------------------------------------------------------------------
# container files


def _dtype_tag(arr):
    if arr.dtype == np.float64:
        return "<f8"
    if arr.dtype == np.complex128:
        return "<c16"
    raise ValueError(f"unsupported payload dtype {arr.dtype}")


def _write_container(path, kind, header, arrays):
    """arrays: sequence of (name, ndarray); payload order is recorded."""
    path = os.fspath(path)
    blocks = []
    blobs = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        tag = _dtype_tag(arr)
        blocks.append({"name": name, "shape": list(arr.shape), "dtype": tag})
        blobs.append(arr.astype(tag, copy=False).tobytes())
    head = dict(header)
    head["payload"] = blocks
    magic = f"{_MAGIC} {_IO_VERSION} {kind}\n".encode("ascii")
    meta = (json.dumps(head, sort_keys=True) + "\n").encode("ascii")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(magic)
        fh.write(meta)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def _read_container(path, kind):
    path = os.fspath(path)
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    with fh:
        magic = fh.readline().decode("ascii", errors="replace").split()
        if len(magic) != 3 or magic[0] != _MAGIC:
            raise FormatError(f"{path}: not a {_MAGIC} container")
        if magic[1] != str(_IO_VERSION):
            raise FormatError(
                f"{path}: format version {magic[1]}, expected {_IO_VERSION}"
            )
        if magic[2] != kind:
            raise FormatError(f"{path}: holds '{magic[2]}', expected '{kind}'")
        try:
            head = json.loads(fh.readline().decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unreadable header: {exc}") from exc
        arrays = {}
        for block in head.get("payload", []):
            dtype = np.dtype(block["dtype"])
            shape = tuple(int(n) for n in block["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise FormatError(f"{path}: truncated payload block '{block['name']}'")
            arrays[block["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    return head, arrays


def write_volume(path, volume):
    header = {
        "dims": list(volume.dims),
        "origin": list(volume.origin),
        "spacing": list(volume.spacing),
    }
    _write_container(path, "volume", header, [("values", volume.values)])


def read_volume(path):
    head, arrays = _read_container(path, "volume")
    try:
        return Volume(arrays["values"], tuple(head["origin"]), tuple(head["spacing"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad volume container: {exc}") from exc


def write_data(path, data):
    header = {"shape": list(data.shape)}
    _write_container(
        path,
        "data",
        header,
        [
            ("p", data.p),
            ("alpha", data.alpha),
            ("beta", data.beta),
            ("values", data.values),
        ],
    )


def read_data(path):
    head, arrays = _read_container(path, "data")
    try:
        return DataTensor(
            arrays["p"], arrays["alpha"], arrays["beta"], arrays["values"]
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad data container: {exc}") from exc


def write_harmonics(path, stack):
    header = {"N": int(stack.N), "n_r": int(stack.coeffs.shape[2])}
    _write_container(path, "harmonics", header, [("coeffs", stack.coeffs)])


def read_harmonics(path):
    head, arrays = _read_container(path, "harmonics")
    try:
        return HarmonicStack(int(head["N"]), arrays["coeffs"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad harmonics container: {exc}") from exc


def write_matrix_set(path, matrices):
    header = {
        "R": float(matrices.R),
        "n_modes": int(matrices.n_modes),
        "M": int(matrices.p_grid.size),
    }
    _write_container(
        path,
        "matrix-set",
        header,
        [
            ("r_grid", matrices.r_grid),
            ("p_grid", matrices.p_grid),
            ("matrices", matrices.matrices),
        ],
    )


def read_matrix_set(path):
    head, arrays = _read_container(path, "matrix-set")
    try:
        return KernelMatrixSet(
            float(head["R"]), arrays["r_grid"], arrays["p_grid"], arrays["matrices"]
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad matrix-set container: {exc}") from exc


# ---------------------------------------------------------------------------
# configuration


_SCAN_KEYS = {
    "R", "r_m", "r_M", "r_M_star", "N", "N_alpha", "N_beta",
    "N_p", "N_r", "N_gamma", "N_psi", "polar_nodes", "seed",
}
_PHANTOM_KEYS = {"grid_n", "balls", "crack", "geometry"}
_NOISE_KEYS = {"snr_db"}
_RECON_KEYS = {"lambda"}
_SECTIONS = {
    "scan": _SCAN_KEYS,
    "phantom": _PHANTOM_KEYS,
    "noise": _NOISE_KEYS,
    "recon": _RECON_KEYS,
}


def load_config(path):
    """Parse and structurally validate a config document.

    The document is a JSON object with `scan`, `phantom`, `noise`, `recon`
    sections; unknown sections or keys are errors so typos never pass
    silently.  Returns (config dict, sha256 hex digest of the file bytes).
    """
    try:
        raw = open(os.fspath(path), "rb").read()
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    digest = hashlib.sha256(raw).hexdigest()
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, body in cfg.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section '{section}'")
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section '{section}' must be an object")
        unknown = set(body) - _SECTIONS[section]
        if unknown:
            raise ConfigError(
                f"{path}: unknown key(s) {sorted(unknown)} in section '{section}'"
            )
    if "scan" not in cfg:
        raise ConfigError(f"{path}: missing required section 'scan'")
    return cfg, digest


def scan_config_from(cfg):
    """Build the ScanConfig from the `scan` section plus recon.lambda."""
    body = dict(cfg.get("scan", {}))
    lam = cfg.get("recon", {}).get("lambda", 0.01)
    try:
        return ScanConfig(lam=float(lam), **body)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scan section: {exc}") from exc


def phantom_spec_from(cfg):
    """Build a PhantomSpec: the stock two-ball object on `grid_n`, with
    optional overrides for balls, crack, and geometry."""
    body = cfg.get("phantom", {})
    spec = default_phantom(int(body.get("grid_n", 32)))
    geometry, balls, crack = spec.geometry, spec.balls, spec.crack
    try:
        if "geometry" in body:
            g = body["geometry"]
            geometry = VolumeGeometry(
                tuple(g["dims"]), tuple(g["origin"]), tuple(g["spacing"])
            )
        if "balls" in body:
            balls = tuple(
                Ball(tuple(b["center"]), b["radius"], b["intensity"])
                for b in body["balls"]
            )
            crack = None
        if "crack" in body:
            c = body["crack"]
            crack = Crack(int(c["axis"]), c["lo"], c["hi"], int(c.get("ball", 0)))
        return PhantomSpec(geometry=geometry, balls=balls, crack=crack)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"phantom section: {exc}") from exc


def noise_spec_from(cfg):
    """Noise parameters; the seed is the single scan seed."""
    body = cfg.get("noise", {})
    if "snr_db" not in body:
        raise ConfigError("noise section: missing 'snr_db'")
    seed = cfg.get("scan", {}).get("seed", 0)
    return NoiseSpec(snr_db=float(body["snr_db"]), seed=int(seed))


# ---------------------------------------------------------------------------
# run manifest


@dataclass
class RunManifest:
    """Reproducibility record written beside every produced output."""

    command: str
    config_sha256: str
    config: dict
    inputs: list
    outputs: list
    package_version: str = __version__
    rng: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def write(self, primary_output):
        path = os.fspath(primary_output) + ".manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _manifest(command, config, digest, inputs, outputs, timings=None, extra=None):
    seed = config.get("scan", {}).get("seed", 0) if config else 0
    return RunManifest(
        command=command,
        config_sha256=digest or "",
        config=config or {},
        inputs=[os.fspath(p) for p in inputs],
        outputs=[os.fspath(p) for p in outputs],
        rng={"algorithm": "PCG64", "seed": int(seed)},
        timings=dict(timings or {}),
        extra=dict(extra or {}),
    )


# ---------------------------------------------------------------------------
# slice export


def slice_export(obj, axis, index, fmt, path):
    """Write one 2-D slice of a volume or data tensor.

    fmt "csv" emits raw values at full precision (exact roundtrip);
    fmt "pgm" emits a 16-bit binary PGM scaled to the slice min/max, with
    the scaling recorded in a JSON sidecar next to the image.
    """
    if isinstance(obj, Volume):
        names = ("x", "y", "z")
        arr = obj.values
    elif isinstance(obj, DataTensor):
        names = ("p", "alpha", "beta")
        arr = obj.values
    else:
        raise ValueError(f"cannot slice a {type(obj).__name__}")
    if isinstance(axis, str):
        if axis not in names:
            raise ValueError(f"axis '{axis}' not one of {names}")
        ax = names.index(axis)
    else:
        ax = int(axis)
        if not 0 <= ax <= 2:
            raise ValueError(f"axis index {ax} out of range")
    if not 0 <= int(index) < arr.shape[ax]:
        raise ValueError(
            f"index {index} out of range for axis {names[ax]} "
            f"of size {arr.shape[ax]}"
        )
    sl = np.take(arr, int(index), axis=ax)
    path = os.fspath(path)
    if fmt == "csv":
        np.savetxt(path, sl, delimiter=",", fmt="%.17g")
    elif fmt == "pgm":
        lo = float(sl.min())
        hi = float(sl.max())
        span = hi - lo
        scaled = np.zeros_like(sl) if span == 0 else (sl - lo) / span
        pixels = np.round(scaled * 65535.0).astype(">u2")
        with open(path, "wb") as fh:
            fh.write(f"P5\n{sl.shape[1]} {sl.shape[0]}\n65535\n".encode("ascii"))
            fh.write(pixels.tobytes())
        sidecar = {
            "min": lo,
            "max": hi,
            "axis": names[ax],
            "index": int(index),
            "shape": list(sl.shape),
        }
        with open(path + ".json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown slice format '{fmt}'")
    return path


def read_slice_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


# ---------------------------------------------------------------------------
# diagnostics


def kernel_report(config, lmax=20, n_samples=10_000, seed=0):
    """Cross-check the two kernel evaluations and the diagonal structure.

    Samples (p, r) pairs with R < r <= p <= r_M_star, compares the direct
    and series forms in mixed error, checks the closed-form diagonal, and
    the limiting gradient ratio 2 at every diagonal root.
    """
    rng = np.random.default_rng(seed)
    p = rng.uniform(config.R * 1.05, config.r_M_star, size=n_samples)
    r = config.R + (p - config.R) * rng.uniform(0.0, 1.0, size=n_samples)
    worst_mixed = 0.0
    for l in range(lmax + 1):
        direct = kernel_direct(p, r, l, config.R)
        series = kernel_expanded(p, r, l, config.R)
        mixed = np.max(np.abs(direct - series) / (1.0 + np.abs(direct)))
        worst_mixed = max(worst_mixed, float(mixed))
    rr = np.linspace(max(config.r_m, config.R * 1.5), config.r_M, 200)
    worst_diag = 0.0
    worst_ratio = 0.0
    n_roots = 0
    for l in range(lmax + 1):
        closed = kernel_diagonal(rr, l, config.R)
        direct = kernel_direct(rr, rr, l, config.R)
        worst_diag = max(worst_diag, float(np.max(np.abs(closed - direct))))
        roots = diagonal_roots(l, config.R, config.r_m, config.r_M)
        n_roots += len(roots)
        for r0 in roots:
            worst_ratio = max(worst_ratio, abs(gradient_ratio(r0, l, config.R) - 2.0))
    return {
        "lmax": int(lmax),
        "samples": int(n_samples),
        "max_mixed_error": worst_mixed,
        "max_diagonal_error": worst_diag,
        "n_diagonal_roots": n_roots,
        "max_gradient_ratio_deviation": worst_ratio,
        "passed": bool(
            worst_mixed <= 1e-9 and worst_diag <= 1e-12 and worst_ratio <= 1e-3
        ),
    }


def sht_report(N, n_theta=None, seed=0):
    """Synthesis/analysis roundtrip and orthonormality Gram residual."""
    grid = sphere_grid(N, n_theta=n_theta)
    rng = np.random.default_rng(seed)
    coeffs = np.zeros((N + 1, 2 * N + 1), dtype=complex)
    for l in range(N + 1):
        for m in range(-l, l + 1):
            coeffs[l, N + m] = rng.normal() + 1j * rng.normal()
    frames = idsht_stack(coeffs[None, :, :], grid)
    back = dsht_stack(frames, grid)[0]
    roundtrip = float(np.max(np.abs(back - coeffs)))

    lmax = min(N, 12)
    cols = []
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            cols.append(ylm(l, m, grid.theta[:, None], grid.phi[None, :]).ravel())
    w2 = (np.ones((grid.n_theta, grid.phi.size)) * grid.w[:, None]).ravel()
    w2 *= 2.0 * np.pi / grid.phi.size
    basis = np.array(cols)
    gram = (basis * w2) @ basis.conj().T
    gram_err = float(np.max(np.abs(gram - np.eye(len(cols)))))
    return {
        "N": int(N),
        "roundtrip_error": roundtrip,
        "gram_error": gram_err,
        "passed": bool(roundtrip < 1e-10 and gram_err < 1e-10),
    }


# ---------------------------------------------------------------------------
# logging


class _Log:
    def __init__(self, quiet=False, json_log=False):
        self.quiet = quiet
        self.json_log = json_log

    def info(self, message, **fields):
        if self.json_log:
            print(json.dumps({"event": message, **fields}, sort_keys=True))
        elif not self.quiet:
            if fields:
                detail = " ".join(f"{k}={v}" for k, v in fields.items())
                print(f"{message} ({detail})")
            else:
                print(message)


def _fail(message):
    print(f"error: {message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def _load_matrices(path, config, log):
    """Accept either a matrix-set container or a cache directory."""
    if os.path.isdir(path):
        log.info("assembling matrices", cache_dir=os.fspath(path))
        return KernelMatrixSet.build(config, cache_dir=path)
    return read_matrix_set(path)


def _cmd_phantom(args, log):
    cfg, digest = load_config(args.config)
    scan = scan_config_from(cfg)
    spec = phantom_spec_from(cfg)
    t0 = time.perf_counter()
    volume = make_phantom(spec, r_m=scan.r_m)
    write_volume(args.out, volume)
    manifest = _manifest(
        "phantom", cfg, digest, [args.config], [args.out],
        timings={"rasterize": time.perf_counter() - t0},
    )
    manifest.write(args.out)
    log.info("wrote phantom", path=args.out, dims=str(volume.dims))
    return 0


def _cmd_project(args, log):
    cfg, digest = load_config(args.config)
    scan = scan_config_from(cfg)
    volume = read_volume(args.in_path)
    t0 = time.perf_counter()
    data = project(volume, scan, interp=args.interp)
    elapsed = time.perf_counter() - t0
    if not np.all(np.isfinite(data.values)):
        raise NumericalError("projection produced non-finite values")
    write_data(args.out, data)
    manifest = _manifest(
        "project", cfg, digest, [args.config, args.in_path], [args.out],
        timings={"project": elapsed},
    )
    manifest.write(args.out)
    log.info("wrote projections", path=args.out, shape=str(data.shape))
    return 0


def _cmd_noise(args, log):
    cfg, digest = load_config(args.config)
    spec = noise_spec_from(cfg)
    data = read_data(args.in_path)
    noisy, eps = add_noise(data, spec)
    write_data(args.out, noisy)
    manifest = _manifest(
        "noise", cfg, digest, [args.config, args.in_path], [args.out],
        extra={"snr_db": spec.snr_db, "epsilon_percent": eps},
    )
    manifest.write(args.out)
    log.info("wrote noisy data", path=args.out, epsilon_percent=round(eps, 4))
    return 0


def _cmd_build_matrices(args, log):
    if not args.out and not args.cache_dir:
        raise ConfigError("build-matrices needs --out and/or --cache-dir")
    cfg, digest = load_config(args.config)
    scan = scan_config_from(cfg)
    if args.cache_dir:
        os.makedirs(args.cache_dir, exist_ok=True)
    t0 = time.perf_counter()
    matrices = KernelMatrixSet.build(scan, cache_dir=args.cache_dir)
    elapsed = time.perf_counter() - t0
    outputs = []
    if args.cache_dir:
        outputs.extend(
            _matrix_cache_path(args.cache_dir, scan, l)
            for l in range(matrices.n_modes)
        )
    if args.out:
        write_matrix_set(args.out, matrices)
        outputs.append(args.out)
    manifest = _manifest(
        "build-matrices", cfg, digest, [args.config], outputs,
        timings={"assemble": elapsed},
    )
    primary = args.out if args.out else os.path.join(args.cache_dir, "matrices")
    manifest.write(primary)
    log.info(
        "assembled matrices", n_modes=matrices.n_modes,
        M=matrices.p_grid.size, seconds=round(elapsed, 3),
    )
    return 0


def _cmd_reconstruct(args, log):
    cfg, digest = load_config(args.config)
    scan = scan_config_from(cfg)
    if args.lam is not None:
        from dataclasses import replace

        scan = replace(scan, lam=args.lam)
    data = read_data(args.in_path)
    matrices = _load_matrices(args.matrices, scan, log)
    geometry = phantom_spec_from(cfg).geometry
    result = reconstruct(data, matrices, scan, geometry)
    if not np.all(np.isfinite(result.volume.values)):
        raise NumericalError("reconstruction produced non-finite values")
    write_volume(args.out, result.volume)
    if args.residuals:
        n = (result.residuals.shape[0]) - 1
        with open(args.residuals, "w", encoding="utf-8") as fh:
            fh.write("l,m,residual\n")
            for l in range(n + 1):
                for m in range(-l, l + 1):
                    fh.write(f"{l},{m},{result.residuals[l, n + m]:.17g}\n")
    manifest = _manifest(
        "reconstruct", cfg, digest,
        [args.config, args.in_path, args.matrices], [args.out],
        timings=result.timings, extra={"lambda": result.lam},
    )
    manifest.write(args.out)
    log.info("wrote reconstruction", path=args.out, lam=result.lam)
    return 0


def _cmd_metrics(args, log):
    ref = read_volume(args.reference)
    rec = read_volume(args.reconstruction)
    values = {"nmse_percent": nmse(ref, rec), "nmae_percent": nmae(ref, rec)}
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(values, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"NMSE {values['nmse_percent']:.6g}")
    print(f"NMAE {values['nmae_percent']:.6g}")
    return 0


def _cmd_kernel_check(args, log):
    cfg, _ = load_config(args.config)
    scan = scan_config_from(cfg)
    report = kernel_report(
        scan, lmax=args.lmax, n_samples=args.samples,
        seed=cfg.get("scan", {}).get("seed", 0),
    )
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["passed"] else 4


def _cmd_sht_roundtrip(args, log):
    cfg, _ = load_config(args.config)
    scan = scan_config_from(cfg)
    n = args.n if args.n is not None else scan.N
    report = sht_report(n, seed=cfg.get("scan", {}).get("seed", 0))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["passed"] else 4


def _cmd_slice(args, log):
    head_kind = None
    with open(args.in_path, "rb") as fh:
        first = fh.readline().decode("ascii", errors="replace").split()
        if len(first) == 3 and first[0] == _MAGIC:
            head_kind = first[2]
    if head_kind == "volume":
        obj = read_volume(args.in_path)
    elif head_kind == "data":
        obj = read_data(args.in_path)
    else:
        raise FormatError(f"{args.in_path}: expected a volume or data container")
    axis = args.axis
    if axis.isdigit():
        axis = int(axis)
    slice_export(obj, axis, args.index, args.format, args.out)
    log.info("wrote slice", path=args.out, format=args.format)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="toric-cst",
        description="Fixed-source Compton tomography pipeline over toric surfaces.",
        epilog="exit codes: 0 ok, 2 usage/config, 3 I/O or format, 4 numerical",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress text")
    parser.add_argument(
        "--json-log", action="store_true", help="machine-readable progress on stdout"
    )
    parser.add_argument(
        "--threads", type=int, default=None, help="cap compiled-kernel parallelism"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="rasterize the configured phantom")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("project", help="compute toric-surface projections")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interp", choices=("trilinear", "nearest"), default="trilinear")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("noise", help="add Gaussian noise at the configured SNR")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("build-matrices", help="assemble the per-degree systems")
    p.add_argument("--config", required=True)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", default=None, help="optional single-file matrix set")
    p.set_defaults(func=_cmd_build_matrices)

    p = sub.add_parser("reconstruct", help="invert a data tensor to a volume")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument(
        "--matrices", required=True, help="matrix-set file or cache directory"
    )
    p.add_argument("--out", required=True)
    p.add_argument("--lam", type=float, default=None, help="override recon.lambda")
    p.add_argument("--residuals", default=None, help="optional residual CSV")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("metrics", help="NMSE/NMAE between two volumes")
    p.add_argument("reference")
    p.add_argument("reconstruction")
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("kernel-check", help="kernel evaluation cross-checks")
    p.add_argument("--config", required=True)
    p.add_argument("--lmax", type=int, default=20)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=_cmd_kernel_check)

    p = sub.add_parser("sht-roundtrip", help="spherical-transform diagnostics")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, default=None, help="band limit override")
    p.set_defaults(func=_cmd_sht_roundtrip)

    p = sub.add_parser("slice", help="export one plane of a volume or tensor")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--axis", required=True, help="x|y|z, p|alpha|beta, or 0|1|2")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--format", choices=("pgm", "csv"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_slice)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    log = _Log(quiet=args.quiet, json_log=args.json_log)
    if args.threads is not None:
        import numba

        numba.set_num_threads(max(1, args.threads))
    try:
        return args.func(args, log)
    except ConfigError as exc:
        _fail(str(exc))
        return 2
    except (FormatError, OSError) as exc:
        _fail(str(exc))
        return 3
    except (NumericalError, LinAlgError, FloatingPointError) as exc:
        _fail(str(exc))
        return 4
    except ValueError as exc:
        _fail(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
