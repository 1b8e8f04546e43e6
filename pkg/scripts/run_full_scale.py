#!/usr/bin/env python3
"""Full-scale experiment: 64-cubed phantom, N = 256, N_alpha = 513,
N_beta = 256, N_p = 512.

This is the expensive reproduction run: expect several hours on one core
and a few GB of memory (the data tensor alone is ~540 MB).  Use
run_desk_scale.py for routine checks.
"""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import dataclasses

from toric_cst.cli_io import write_data, write_volume
from toric_cst.geometry import ScanConfig
from toric_cst.phantom_metrics import default_phantom, make_phantom, nmae, nmse
from toric_cst.projector import project
from toric_cst.reconstruct import reconstruct
from toric_cst.system import KernelMatrixSet

FULL = ScanConfig(
    R=0.125, r_m=0.4, r_M=0.95, r_M_star=1.9,
    N=256, N_alpha=513, N_beta=256, N_p=512, N_r=512,
    N_gamma=64, N_psi=128, lam=0.01,
)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/full", type=Path)
    ap.add_argument("--lam", type=float, default=FULL.lam)
    ap.add_argument("--cache-dir", type=Path, default=None,
                    help="reuse/populate per-degree system matrix cache")
    ap.add_argument("--skip-data-dump", action="store_true",
                    help="do not write the ~540 MB data tensor to disk")
    args = ap.parse_args(argv)

    cfg = dataclasses.replace(FULL, lam=args.lam)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    spec = default_phantom(64)
    vol = make_phantom(spec, r_m=cfg.r_m)
    write_volume(out / "phantom.t3v", vol)

    t0 = time.perf_counter()
    data = project(vol, cfg)
    print(f"projection: {time.perf_counter() - t0:.0f}s", flush=True)
    if not args.skip_data_dump:
        write_data(out / "data.t3d", data)

    t0 = time.perf_counter()
    cache = str(args.cache_dir) if args.cache_dir else None
    matrices = KernelMatrixSet.build(cfg, cache_dir=cache)
    print(f"system matrices: {time.perf_counter() - t0:.0f}s", flush=True)

    t0 = time.perf_counter()
    rec = reconstruct(data, matrices, cfg, spec.geometry)
    print(f"reconstruction: {time.perf_counter() - t0:.0f}s")
    write_volume(out / "recon.t3v", rec.volume)

    summary = {"lambda": args.lam,
               "nmse_percent": nmse(vol, rec.volume),
               "nmae_percent": nmae(vol, rec.volume)}
    print(f"NMSE {summary['nmse_percent']:.4f}%  NMAE {summary['nmae_percent']:.4f}%")
    with open(out / "metrics.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
