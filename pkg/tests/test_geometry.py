import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from toric_cst.geometry import (
    DetectorAngles,
    ScanConfig,
    compton_energy,
    detector_position,
    omega_to_p,
    p_to_omega,
    radial_profile,
    rotation_y,
    rotation_z,
    torus_point_omega,
    torus_point_p,
)

obtuse = st.floats(np.pi / 2 + 1e-3, np.pi - 1e-3)


def make_config(**kw):
    base = dict(
        R=0.125, r_m=0.4, r_M=0.95, r_M_star=1.9, N=4,
        N_alpha=9, N_beta=5, N_p=16, N_r=16, N_gamma=8, N_psi=8,
    )
    base.update(kw)
    return ScanConfig(**base)


class TestScanConfig:
    def test_valid(self):
        cfg = make_config()
        assert cfg.lam == 0.01

    def test_radii_ordering_rejected(self):
        with pytest.raises(ValueError):
            make_config(r_m=0.1)  # below R
        with pytest.raises(ValueError):
            make_config(r_M=0.3)  # below r_m
        with pytest.raises(ValueError):
            make_config(r_M_star=0.5)  # below r_M

    def test_alpha_count_tied_to_order(self):
        with pytest.raises(ValueError):
            make_config(N_alpha=8)

    def test_grid_identification_enforced(self):
        with pytest.raises(ValueError):
            make_config(N_p=16, N_r=32)

    def test_radial_grid(self):
        cfg = make_config()
        r = cfg.radial_grid()
        assert r.shape == (17,)
        assert r[0] == cfg.R
        assert r[-1] == pytest.approx(cfg.r_M_star)
        p = cfg.p_grid()
        assert_allclose(p, r[1:])
        assert np.all(p > cfg.R)


class TestDetectorPosition:
    def test_pole(self):
        d = detector_position(DetectorAngles(0.0, 0.0), 1.0)
        assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-15)

    def test_equator(self):
        d = detector_position(DetectorAngles(0.0, np.pi / 2), 0.125)
        assert_allclose(d, [0.125, 0.0, 0.0], atol=1e-16)

    def test_axis_permutation(self):
        d = detector_position(DetectorAngles(np.pi / 2, np.pi / 2), 1.0)
        assert_allclose(d, [0.0, 1.0, 0.0], atol=1e-15)

    @given(st.floats(0, 2 * np.pi - 1e-9), st.floats(0, np.pi))
    def test_norm_is_radius(self, alpha, beta):
        d = detector_position(DetectorAngles(alpha, beta), 0.125)
        assert np.linalg.norm(d) == pytest.approx(0.125)


class TestRotations:
    def test_identity(self):
        assert_allclose(rotation_z(0.0), np.eye(3))

    def test_y_sends_z_to_x(self):
        assert_allclose(rotation_y(np.pi / 2) @ [0, 0, 1], [1, 0, 0], atol=1e-15)

    def test_z_sends_x_to_y(self):
        assert_allclose(rotation_z(np.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_orthogonal_and_proper(self, alpha, beta):
        for rot in (rotation_z(alpha), rotation_y(beta)):
            assert_allclose(rot @ rot.T, np.eye(3), atol=1e-14)
            assert np.linalg.det(rot) == pytest.approx(1.0)

    @given(st.floats(0, 2 * np.pi - 1e-9), st.floats(0, np.pi))
    def test_composition_points_at_detector(self, alpha, beta):
        axis = rotation_z(alpha) @ rotation_y(beta) @ np.array([0.0, 0.0, 1.0])
        d = detector_position(DetectorAngles(alpha, beta), 1.0)
        assert_allclose(axis, d, atol=1e-14)


class TestRadialProfile:
    def test_starts_at_sphere(self):
        assert radial_profile(3 * np.pi / 4, 0.0, 1.0) == pytest.approx(1.0)

    def test_apex(self):
        r = radial_profile(3 * np.pi / 4, 3 * np.pi / 4 - np.pi / 2, 1.0)
        assert r == pytest.approx(np.sqrt(2.0))

    def test_ends_at_sphere(self):
        r = radial_profile(3 * np.pi / 4, 2 * (3 * np.pi / 4) - np.pi, 1.0)
        assert r == pytest.approx(1.0)

    def test_gamma_out_of_range(self):
        with pytest.raises(ValueError):
            radial_profile(3 * np.pi / 4, 2.0, 1.0)
        with pytest.raises(ValueError):
            radial_profile(3 * np.pi / 4, -0.1, 1.0)

    @given(obtuse, st.floats(0, 1))
    def test_bounded_by_sphere_and_apex(self, omega, frac):
        gamma = frac * (2 * omega - np.pi)
        r = radial_profile(omega, gamma, 0.125)
        assert 0.125 * (1 - 1e-12) <= r <= 0.125 / np.sin(omega) * (1 + 1e-12)


class TestTorusPoints:
    def test_gamma_zero_points_at_detector(self):
        pt = torus_point_omega(3 * np.pi / 4, DetectorAngles(0.0, 0.0), 0.0, 0.0, 1.0)
        assert_allclose(pt, [0, 0, 1], atol=1e-15)

    def test_tilted_detector(self):
        pt = torus_point_omega(
            3 * np.pi / 4, DetectorAngles(0.0, np.pi / 2), 0.0, 0.0, 1.0
        )
        assert_allclose(pt, [1, 0, 0], atol=1e-15)

    @given(obtuse, st.floats(0, 1), st.floats(0, 2 * np.pi - 1e-9),
           st.floats(0, 2 * np.pi - 1e-9), st.floats(0, np.pi))
    def test_norm_matches_radial_profile(self, omega, frac, psi, alpha, beta):
        gamma = frac * (2 * omega - np.pi)
        angles = DetectorAngles(alpha, beta)
        pt = torus_point_omega(omega, angles, gamma, psi, 0.125)
        assert np.linalg.norm(pt) == pytest.approx(
            radial_profile(omega, gamma, 0.125), rel=1e-12, abs=1e-15
        )

    def test_p_label_radius_at_endpoints(self):
        angles = DetectorAngles(0.0, 0.0)
        pt = torus_point_p(0.25, angles, 0.0, 0.0, 0.125)
        assert np.linalg.norm(pt) == pytest.approx(0.125)
        pt = torus_point_p(0.25, angles, np.arccos(0.5), 0.0, 0.125)
        assert np.linalg.norm(pt) == pytest.approx(0.25)

    def test_p_label_rejects_small_p(self):
        with pytest.raises(ValueError):
            torus_point_p(0.1, DetectorAngles(0.0, 0.0), 0.0, 0.0, 0.125)

    @given(obtuse, st.floats(0, 1), st.floats(0, 2 * np.pi - 1e-9))
    def test_labelings_agree(self, omega, frac, psi):
        # p sin(omega - gamma) = p cos(gamma - arccos(R/p)) with p = R/sin omega
        gamma = frac * (2 * omega - np.pi)
        angles = DetectorAngles(1.0, 2.0)
        a = torus_point_omega(omega, angles, gamma, psi, 0.125)
        b = torus_point_p(omega_to_p(omega, 0.125), angles, gamma, psi, 0.125)
        assert_allclose(a, b, rtol=1e-12, atol=1e-15)


class TestOmegaP:
    def test_known_value(self):
        assert omega_to_p(5 * np.pi / 6, 1.0) == pytest.approx(2.0)

    def test_near_perpendicular_limit(self):
        assert omega_to_p(np.pi / 2 + 1e-9, 0.125) == pytest.approx(0.125)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            omega_to_p(np.pi / 3, 1.0)
        with pytest.raises(ValueError):
            p_to_omega(0.9, 1.0)

    @given(obtuse)
    def test_roundtrip(self, omega):
        assert p_to_omega(omega_to_p(omega, 0.125), 0.125) == pytest.approx(omega)

    def test_obtuse_branch(self):
        assert np.pi / 2 < p_to_omega(2.0, 0.125) < np.pi


class TestComptonEnergy:
    def test_no_scattering(self):
        assert compton_energy(0.0, 200.0) == pytest.approx(200.0)

    def test_right_angle(self):
        assert compton_energy(np.pi / 2, 511.0) == pytest.approx(255.5)

    def test_backscatter(self):
        assert compton_energy(np.pi, 511.0) == pytest.approx(511.0 / 3.0)
