import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smallbodies import oracle
from smallbodies.medium import InputError


def s_matrix(series):
    l = np.arange(series.l_max + 1)
    return 1 + 2 * series.coefficients / ((1j**l) * (2 * l + 1))


class TestSeries:
    def test_dirichlet_like_limit(self):
        series = oracle.solve_sphere_exact(1.0, 1e8, 1.0)
        ct = np.linspace(-1, 1, 41)
        assert np.max(np.abs(series.field(np.ones_like(ct), ct))) <= 1e-6

    def test_zero_impedance_is_sound_hard(self):
        series = oracle.solve_sphere_exact(0.8, 0.0, 1.5)
        ct = np.linspace(-1, 1, 25)
        du = series.radial_derivative(np.full_like(ct, 0.8), ct)
        assert np.max(np.abs(du)) <= 1e-12

    def test_boundary_condition_at_random_points(self):
        a, zeta, k = 0.3, 2.0 - 1.5j, 2.0
        series = oracle.solve_sphere_exact(a, zeta, k)
        ct = np.random.default_rng(0).uniform(-1, 1, 100)
        r = np.full_like(ct, a)
        mismatch = series.radial_derivative(r, ct) - zeta * series.field(r, ct)
        scale = np.abs(k) + np.abs(zeta)
        assert np.max(np.abs(mismatch)) / scale <= 1e-10
        assert np.max(series.mode_residuals()) <= 1e-12

    def test_truncation(self):
        series = oracle.solve_sphere_exact(2.0, 1.0 - 1j, 3.0)
        assert series.truncation_ratio() <= 1e-12
        assert series.l_max >= 10 + 2 * 6

    @given(st.floats(-50, 50), st.floats(0.05, 2), st.floats(0.1, 3))
    def test_lossless_impedance_conserves_energy(self, zeta, a, k):
        try:
            series = oracle.solve_sphere_exact(a, zeta, k)
        except oracle.ImpedanceResonance:
            return
        np.testing.assert_allclose(np.abs(s_matrix(series)), 1.0, atol=1e-9)

    @given(st.floats(-20, 20), st.floats(-20, -0.01), st.floats(0.05, 2))
    def test_absorbing_impedance_loses_energy(self, re_z, im_z, a):
        series = oracle.solve_sphere_exact(a, complex(re_z, im_z), 1.0)
        assert np.all(np.abs(s_matrix(series)) <= 1 + 1e-12)

    def test_bad_arguments(self):
        with pytest.raises(InputError):
            oracle.solve_sphere_exact(-1.0, 1.0, 1.0)


class TestCharges:
    def test_projection_agrees_with_modal_charge(self):
        k = 1.0
        series = oracle.solve_sphere_exact(0.05, 1.0 / np.sqrt(0.05), k)
        q = oracle.extract_monopole_charge(series)
        for radius in (100 / k, 200 / k):
            assert oracle.monopole_by_projection(series, radius) == pytest.approx(q, rel=1e-10)

    def test_zero_impedance_charge_is_third_order(self):
        radii = np.array([0.04, 0.02, 0.01])
        q = [abs(oracle.extract_monopole_charge(oracle.solve_sphere_exact(a, 0.0, 1.0))) for a in radii]
        slope = np.polyfit(np.log(radii), np.log(q), 1)[0]
        assert slope == pytest.approx(3.0, abs=0.01)

    def test_refined_charge_ratio(self):
        h, kappa, k = 1.0, 0.5, 1.0
        devs = []
        for a in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
            zeta = h / a**kappa
            q = oracle.extract_monopole_charge(oracle.solve_sphere_exact(a, zeta, k))
            devs.append(abs(q / (-4 * np.pi * zeta * a * a / (1 + zeta * a)) - 1))
        assert np.all(np.diff(devs) < 0)
        assert devs[-1] < 1e-4

    def test_real_part_of_deviation_matches_next_order(self):
        # the real correction behaves like k^2 a^(1+kappa) / (3 h) as a -> 0; the imaginary part of the
        # deviation is the radiation term i k Q / (4 pi)
        h, kappa, k = 1.0, 0.5, 1.0
        gaps = []
        for a in (1e-3, 1e-4, 1e-5):
            zeta = h / a**kappa
            q = oracle.extract_monopole_charge(oracle.solve_sphere_exact(a, zeta, k))
            ratio = q / (-4 * np.pi * zeta * a * a / (1 + zeta * a))
            gaps.append(abs((ratio.real - 1) / (k * k * a ** (1 + kappa) / (3 * h)) - 1))
        assert np.all(np.diff(gaps) < 0) and gaps[-1] < 0.01


class TestSurfaceIdentities:
    @pytest.mark.parametrize("a", [1.0, 0.5, 0.1])
    def test_single_layer(self, a):
        t = a * np.array([0.6, 0.0, 0.8])
        assert oracle.single_layer_sphere_identity(a, t) == pytest.approx(a, rel=1e-3)

    def test_single_layer_off_sphere(self):
        with pytest.raises(InputError):
            oracle.single_layer_sphere_identity(1.0, [0.0, 0.0, 0.9])

    def test_normal_derivative_forced_value(self):
        value = oracle.normal_derivative_double_integral(1.0, 1.0)
        assert value == pytest.approx(-4 * np.pi, rel=1e-3)

    def test_normal_derivative_linear_in_density(self):
        assert oracle.normal_derivative_double_integral(1.0, 2.0) == pytest.approx(-8 * np.pi, rel=1e-3)
        assert oracle.normal_derivative_layer_identity(0.5, 2.0) == pytest.approx(1.0, rel=1e-3)

    def test_normal_derivative_speed_scaling(self):
        assert oracle.normal_derivative_double_integral(1.0, 1.0, c_m=2.0) == pytest.approx(-2 * np.pi, rel=1e-3)
