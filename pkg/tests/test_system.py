"""Tests for the discrete forward operator: product-integration weights,
cell-averaged kernels, matrix assembly, and the on-disk matrix cache.

Level oracles come from adaptive quadrature of the one-dimensional mode
integral; the expected accuracy figures and their O(1/M) decay were measured
against that oracle and are asserted with margin.
"""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from toric_cst.geometry import ScanConfig
from toric_cst.kernel import diagonal_roots, kernel_direct, kernel_expanded
from toric_cst.projector import coeff_forward_1d
from toric_cst.system import (
    KernelMatrixSet,
    _cell_samples,
    assemble,
    averaged_kernel,
    load_matrix,
    matrix_cache_path,
    save_matrix,
    weight,
)


def make_config(M=32, **kw):
    base = dict(
        R=0.125,
        r_m=0.4,
        r_M=0.95,
        r_M_star=1.9,
        N=12,
        N_alpha=25,
        N_beta=2,
        N_p=M,
        N_r=M,
        N_gamma=8,
        N_psi=8,
    )
    base.update(kw)
    return ScanConfig(**base)


def bump_profile(r):
    """C-infinity bump supported on the open shell (0.4, 0.95)."""
    r = np.asarray(r, dtype=float)
    x = (r - 0.675) / 0.275
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - xi * xi))
    return out


class TestWeight:
    def test_interior_cell_closed_form(self):
        # sqrt(p^2 - lo^2) - sqrt(p^2 - hi^2) for p=1, cell [0.6, 0.8]
        p_grid = np.array([0.8, 1.0])
        r_grid = np.array([0.4, 0.6, 0.8])
        w = weight(1, 1, p_grid, r_grid)
        assert w == pytest.approx(0.2, abs=1e-15)

    def test_quadrature_oracle_nonsingular(self):
        cfg = make_config(M=16)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        for j, q in [(5, 2), (10, 0), (15, 9), (8, 7)]:
            ref, err = quad(lambda rr: rr / np.sqrt(p[j] ** 2 - rr**2), r[q], r[q + 1])
            assert err < 1e-12
            assert weight(j, q, p, r) == pytest.approx(ref, abs=1e-10)

    def test_quadrature_oracle_singular_cell(self):
        # q == j puts the upper limit at r = p; substitute r = p*sin(t)
        cfg = make_config(M=16)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        for j in (0, 4, 11, 15):
            lo = r[j]
            ref, err = quad(
                lambda t: p[j] * np.sin(t), np.arcsin(lo / p[j]), np.pi / 2
            )
            assert err < 1e-12
            assert weight(j, j, p, r) == pytest.approx(ref, abs=1e-10)

    def test_zero_above_diagonal(self):
        cfg = make_config(M=8)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        for j in range(8):
            for q in range(j + 1, 8):
                assert weight(j, q, p, r) == 0.0

    def test_positive_on_lower_triangle(self):
        cfg = make_config(M=12)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        for j in range(12):
            for q in range(j + 1):
                assert weight(j, q, p, r) > 0.0

    def test_row_sum_telescopes(self):
        # sum_q w_jq = sqrt(p_j^2 - R^2) since the cells tile [R, p_j]
        cfg = make_config(M=24)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        for j in range(24):
            total = sum(weight(j, q, p, r) for q in range(j + 1))
            assert total == pytest.approx(np.sqrt(p[j] ** 2 - cfg.R**2), rel=1e-13)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_adjacent_cells_add(self, seed):
        rng = np.random.default_rng(seed)
        cfg = make_config(M=20)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        j = int(rng.integers(2, 20))
        q = int(rng.integers(0, j - 1))
        merged = np.concatenate([r[: q + 1], r[q + 2 :]])
        both = weight(j, q, p, r) + weight(j, q + 1, p, r)
        assert both == pytest.approx(weight(j, q, p, merged), rel=1e-13)


class TestCellSamples:
    def test_ten_equidistant_inclusive(self):
        r_grid = np.array([0.125, 0.5, 1.0, 1.75])
        s = _cell_samples(r_grid, 1)
        assert s.shape == (10,)
        assert s[0] == 0.5
        assert s[-1] == 1.0
        np.testing.assert_allclose(np.diff(s), (1.0 - 0.5) / 9, rtol=1e-12)


class TestAveragedKernel:
    def test_degree_zero_closed_form(self):
        # sqrt(p+r)*K_0/r = 4*pi*r*sqrt(p^2-R^2)/(R*p) is linear in r, so the
        # ten-point average equals the value at the cell midpoint.
        cfg = make_config(M=40, r_M_star=1.125)
        r = cfg.radial_grid()
        q = 11
        j = 18
        assert r[q] == pytest.approx(0.4, abs=1e-15)
        assert cfg.p_grid()[j] == pytest.approx(0.6, abs=1e-15)
        p = cfg.p_grid()[j]
        mid = 0.5 * (r[q] + r[q + 1])
        expected = 4.0 * np.pi * mid * np.sqrt(p * p - cfg.R**2) / (cfg.R * p)
        assert averaged_kernel(0, j, q, cfg) == pytest.approx(expected, rel=1e-12)

    def test_matches_independent_kernel_route(self):
        # recompute the ten-sample mean with the series-evaluated kernel
        cfg = make_config(M=20)
        r = cfg.radial_grid()
        p = cfg.p_grid()
        for l, j, q in [(1, 7, 3), (5, 12, 12), (9, 19, 4)]:
            s = _cell_samples(r, q)
            kt = np.sqrt(p[j] + s) * kernel_expanded(p[j], s, l, cfg.R) / s
            assert averaged_kernel(l, j, q, cfg) == pytest.approx(
                float(kt.mean()), rel=1e-9
            )

    def test_rejects_cell_right_of_row(self):
        cfg = make_config(M=10)
        with pytest.raises(ValueError):
            averaged_kernel(0, 3, 4, cfg)

    def test_innermost_cell_touches_source_sphere(self):
        # first cell starts exactly at r = R and must still average cleanly
        cfg = make_config(M=10)
        val = averaged_kernel(2, 5, 0, cfg)
        assert np.isfinite(val)


class TestAssemble:
    def test_strictly_lower_triangular_support(self):
        a = assemble(3, make_config(M=16))
        assert np.all(np.triu(a, 1) == 0.0)
        assert np.all(np.isfinite(a))

    def test_matches_scalar_entries(self):
        cfg = make_config(M=24)
        a = assemble(5, cfg)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        scale = np.max(np.abs(a))
        for j in range(24):
            for q in range(j + 1):
                ref = weight(j, q, p, r) * averaged_kernel(5, j, q, cfg)
                assert abs(a[j, q] - ref) < 1e-12 * scale

    def test_deterministic(self):
        cfg = make_config(M=32)
        a1 = assemble(7, cfg)
        a2 = assemble(7, cfg)
        assert np.array_equal(a1, a2)

    def test_scaling_input_scales_output_exactly(self):
        cfg = make_config(M=32)
        a = assemble(4, cfg)
        f = bump_profile(cfg.radial_grid()[1:])
        assert np.array_equal(a @ (4.0 * f), 4.0 * (a @ f))

    def test_rejects_degree_out_of_range(self):
        cfg = make_config(M=8, N=3, N_alpha=7)
        with pytest.raises(ValueError):
            assemble(4, cfg)
        with pytest.raises(ValueError):
            assemble(-1, cfg)

    @pytest.mark.parametrize("l,level", [(0, 0.03), (3, 0.05), (10, 0.09)])
    def test_first_order_convergence_to_mode_integral(self, l, level):
        # Right-endpoint sampling of f makes the scheme O(1/M); the constant
        # grows with degree.  Levels are measured values plus ~50% margin.
        errs = []
        for M in (64, 128, 256):
            cfg = make_config(M=M, N=10, N_alpha=21)
            a = assemble(l, cfg)
            f = bump_profile(cfg.radial_grid()[1:])
            g_ref = coeff_forward_1d(bump_profile, l, cfg.p_grid(), cfg)
            errs.append(np.max(np.abs(a @ f - g_ref)) / np.max(np.abs(g_ref)))
        assert errs[0] > errs[1] > errs[2]
        ratios = [errs[0] / errs[1], errs[1] / errs[2]]
        assert all(1.45 < rho < 2.9 for rho in ratios)
        assert errs[2] < level

    @pytest.mark.parametrize(
        "l,M",
        [(6, 128), (6, 256), (8, 128), (8, 256), (10, 256)],
    )
    def test_diagonal_dips_at_legendre_roots(self, l, M):
        # K_l(r,r) vanishes where P_l(R/r) = 0; in the assembled matrix the
        # cell average bottoms out at O(1/M), so test dip location and depth
        # relative to the rest of the diagonal rather than an absolute zero.
        cfg = make_config(M=M)
        a = assemble(l, cfg)
        p = cfg.p_grid()
        r = cfg.radial_grid()
        w_diag = np.array([weight(j, j, p, r) for j in range(M)])
        d = np.abs(np.diag(a)) / w_diag
        roots = diagonal_roots(l, cfg.R, cfg.r_m, cfg.r_M)
        assert len(roots) > 0
        window = np.where((p >= cfg.r_m) & (p <= cfg.r_M))[0]
        j_star = window[np.argmin(d[window])]
        h = p[1] - p[0]
        assert min(abs(p[j_star] - r0) for r0 in roots) <= 1.5 * h
        assert np.median(d[window]) / d[j_star] >= 25.0


class TestMatrixCache:
    def test_save_load_roundtrip_bit_identical(self, tmp_path):
        cfg = make_config(M=12)
        a = assemble(2, cfg)
        path = tmp_path / "a.t3m"
        save_matrix(path, a, cfg, 2)
        b = load_matrix(path, config=cfg, l=2)
        assert b.dtype == np.float64
        assert np.array_equal(a, b)

    def test_load_without_expectations(self, tmp_path):
        cfg = make_config(M=6)
        a = assemble(1, cfg)
        path = tmp_path / "a.t3m"
        save_matrix(path, a, cfg, 1)
        assert np.array_equal(load_matrix(path), a)

    def test_rejects_degree_mismatch(self, tmp_path):
        cfg = make_config(M=6)
        path = tmp_path / "a.t3m"
        save_matrix(path, assemble(1, cfg), cfg, 1)
        with pytest.raises(ValueError):
            load_matrix(path, config=cfg, l=2)

    def test_rejects_grid_mismatch(self, tmp_path):
        cfg = make_config(M=6)
        path = tmp_path / "a.t3m"
        save_matrix(path, assemble(1, cfg), cfg, 1)
        with pytest.raises(ValueError):
            load_matrix(path, config=make_config(M=8), l=1)
        with pytest.raises(ValueError):
            load_matrix(path, config=make_config(M=6, r_M_star=1.7), l=1)

    def test_rejects_truncated_payload(self, tmp_path):
        cfg = make_config(M=6)
        path = tmp_path / "a.t3m"
        save_matrix(path, assemble(1, cfg), cfg, 1)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(ValueError):
            load_matrix(path)

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "a.t3m"
        path.write_bytes(b'{"format": "something-else", "version": 1}\n' + b"\x00" * 8)
        with pytest.raises(ValueError):
            load_matrix(path)

    def test_cache_path_stable_and_degree_specific(self, tmp_path):
        cfg = make_config(M=12)
        p1 = Path(matrix_cache_path(tmp_path, cfg, 3))
        p2 = Path(matrix_cache_path(tmp_path, cfg, 3))
        p3 = Path(matrix_cache_path(tmp_path, cfg, 4))
        assert p1 == p2
        assert p1 != p3
        assert p1.name.startswith("A003")

    def test_assemble_reads_back_from_cache(self, tmp_path):
        cfg = make_config(M=10)
        a = assemble(2, cfg, cache_dir=tmp_path)
        path = Path(matrix_cache_path(tmp_path, cfg, 2))
        assert path.exists()
        # overwrite the cached payload; a cache hit must return the new data
        planted = np.tril(np.full((10, 10), 7.5))
        save_matrix(path, planted, cfg, 2)
        again = assemble(2, cfg, cache_dir=tmp_path)
        assert np.array_equal(again, planted)
        assert not np.array_equal(again, a)


class TestKernelMatrixSet:
    def test_build_shapes_and_contents(self):
        cfg = make_config(M=10, N=3, N_alpha=7)
        ms = KernelMatrixSet.build(cfg)
        assert ms.n_modes == 4
        assert ms.matrices.shape == (4, 10, 10)
        assert ms.r_grid.shape == (11,)
        assert ms.p_grid.shape == (10,)
        assert np.array_equal(ms.get(2), assemble(2, cfg))

    def test_build_populates_cache(self, tmp_path):
        cfg = make_config(M=6, N=2, N_alpha=5)
        KernelMatrixSet.build(cfg, cache_dir=tmp_path)
        for l in range(3):
            assert Path(matrix_cache_path(tmp_path, cfg, l)).exists()

    def test_get_bounds(self):
        cfg = make_config(M=6, N=2, N_alpha=5)
        ms = KernelMatrixSet.build(cfg)
        with pytest.raises(ValueError):
            ms.get(3)
        with pytest.raises(ValueError):
            ms.get(-1)

    def test_constructor_validation(self):
        cfg = make_config(M=6, N=2, N_alpha=5)
        ms = KernelMatrixSet.build(cfg)
        bad = ms.matrices.copy()
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            KernelMatrixSet(cfg.R, ms.r_grid, ms.p_grid, bad)
        with pytest.raises(ValueError):
            KernelMatrixSet(cfg.R, ms.r_grid[:-1], ms.p_grid, ms.matrices)
