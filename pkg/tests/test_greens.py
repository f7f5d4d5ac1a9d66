import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate

from smallbodies.greens import (CUBE_SELF_INTEGRAL, GreensKernel, InterfaceAsymptotics, KernelTable,
                                SingularityError, box_inverse_distance_integral, green_eval, green_interface,
                                green_near_singularity)
from smallbodies.medium import Grid, InputError, ScalarGridField

coords = st.floats(-3, 3, allow_nan=False)
vec = st.tuples(coords, coords, coords).map(np.array)


class TestClosedForm:
    def test_static_value(self):
        g = green_eval(GreensKernel(0.0), [0, 0, 0], [1, 0, 0])
        assert g == pytest.approx(1 / (4 * np.pi), rel=1e-15)

    def test_full_period(self):
        g = green_eval(GreensKernel(np.pi), [0, 0, 0], [0, 2, 0])
        assert g == pytest.approx(1 / (8 * np.pi), rel=1e-14, abs=1e-15)

    def test_unit_distance(self):
        g = green_eval(GreensKernel(1.0), [0, 0, 0], [0, 0, 1])
        assert g == pytest.approx((np.cos(1) + 1j * np.sin(1)) / (4 * np.pi), rel=1e-15)

    def test_coincident_points(self):
        with pytest.raises(SingularityError):
            green_eval(GreensKernel(1.0), [1, 2, 3], [1, 2, 3])

    def test_normalizations(self):
        x, y = np.zeros(3), np.array([0.5, 0, 0])
        dist = GreensKernel(1.0, c0=2.0)(x, y)
        alt = GreensKernel(1.0, c0=2.0, normalization="inverse-speed")(x, y)
        assert alt / dist == pytest.approx(2.0)

    def test_bad_mode(self):
        with pytest.raises(InputError):
            GreensKernel(1.0, mode="spline")

    @given(vec, vec, st.floats(0, 5))
    def test_reciprocity(self, x, y, k):
        assume(np.linalg.norm(x - y) > 1e-6)
        g = GreensKernel(k)
        assert abs(g(x, y) - g(y, x)) <= 1e-13 * abs(g(x, y))

    def test_strength_by_extrapolation(self):
        # r G(r) = A + B r + O(r^2); Richardson on r and r/2 removes the linear term
        g = GreensKernel(1.3, c0=2.0)
        d = np.array([0.6, 0.0, 0.8])
        vals = [r * g(np.zeros(3), r * d) for r in (1e-4, 5e-5)]
        limit = 2 * vals[1] - vals[0]
        assert limit == pytest.approx(1 / (4 * np.pi * 4.0), rel=1e-6)

    def test_helmholtz_residual_second_order(self):
        k, c0 = 2.0, 1.0
        g = GreensKernel(k, c0)
        y = np.zeros(3)
        x = np.array([0.4, -0.3, 0.5])
        res = []
        for h in (0.04, 0.02, 0.01):
            lap = sum(g(x + h * e, y) + g(x - h * e, y) for e in np.eye(3)) - 6 * g(x, y)
            res.append(abs(c0**2 * lap / h**2 + (k * c0) ** 2 * g(x, y)))
        assert np.all(np.log2(np.array(res[:-1]) / res[1:]) > 1.9)

    def test_matrix_zero_diagonal(self):
        pts = np.random.default_rng(0).random((5, 3))
        m = GreensKernel(1.0).matrix(pts)
        assert np.all(np.diag(m) == 0)
        assert m[1, 3] == GreensKernel(1.0)(pts[1], pts[3])
        with pytest.raises(SingularityError):
            GreensKernel(1.0).matrix(np.vstack([pts, pts[:1]]))


class TestNearSingularity:
    def test_unit_case(self):
        assert green_near_singularity(GreensKernel(1.0), [0, 0, 0], [1, 0, 0], 1.0) == pytest.approx(1 / (4 * np.pi))

    def test_compensating_scales(self):
        val = green_near_singularity(GreensKernel(1.0), [0, 0, 0], [0.5, 0, 0], 2.0)
        assert val == pytest.approx(1 / (4 * np.pi))

    def test_ratio_tends_to_one(self):
        g = GreensKernel(1.0)
        ratios = [g([0, 0, 0], [r, 0, 0]) / green_near_singularity(g, [0, 0, 0], [r, 0, 0], 1.0)
                  for r in (1e-2, 1e-3, 1e-4)]
        gaps = np.abs(np.array(ratios) - 1)
        assert np.all(np.diff(gaps) < 0) and gaps[-1] < 2e-4

    def test_singular_mode_uses_local_speed(self):
        g = GreensKernel(0.0, mode="singular", speed=lambda x: np.full(x.shape[:-1], 2.0))
        assert g([0, 0, 0], [1, 0, 0]) == pytest.approx(1 / (16 * np.pi))


class TestInterface:
    def test_no_interface(self):
        asym = InterfaceAsymptotics(1.0, 1.0)
        x, y = np.array([0.1, 0.2, 0.3]), np.array([0.0, 0.0, 0.7])
        r = np.linalg.norm(x - y)
        for side in ("inside", "outside"):
            assert green_interface(asym, x, y, side) == pytest.approx(1 / (4 * np.pi * r))

    def test_mirror_image(self):
        asym = InterfaceAsymptotics(2.0, 1.0)
        x, y = np.array([0.1, 0.0, 0.2]), np.array([0.3, 0.1, -0.2])
        r, big_r = asym.distances(x, y)
        assert r == pytest.approx(big_r)
        assert green_interface(asym, x, y, "inside") == pytest.approx((1 + asym.b) / (4 * np.pi * 2.0 * r))

    def test_adopted_coefficient(self):
        asym = InterfaceAsymptotics(2.0, 1.0)
        assert asym.b == pytest.approx(1 / 3)
        val = green_interface(asym, [0, 0, 0.1], [0, 0, 0.2], "inside")
        assert val == pytest.approx((1 / (8 * np.pi)) * (1 / 0.1 + (1 / 3) / 0.3))

    def test_errors(self):
        asym = InterfaceAsymptotics(2.0, 1.0)
        with pytest.raises(SingularityError):
            green_interface(asym, [0, 0, 0.1], [0, 0, 0.1], "inside")
        with pytest.raises(InputError):
            green_interface(asym, [0, 0, 0.1], [0, 0, 0.2], "above")


class TestKernelTable:
    def _table(self, k):
        grid = Grid((-1.0, -1.0, -1.0), (0.05, 0.05, 0.05), (41, 41, 41))
        d = grid.nodes()
        r = np.linalg.norm(d, axis=-1)
        r[r == 0] = 1.0
        return KernelTable(ScalarGridField(grid, np.exp(1j * k * r) / (4 * np.pi * r)))

    def test_interpolates_constant_kernel(self):
        kern = GreensKernel(1.0, mode="table", table=self._table(1.0))
        x, y = np.array([0.3, 0.1, 0.2]), np.array([-0.2, 0.0, -0.1])
        assert abs(kern(x, y) - GreensKernel(1.0)(x, y)) < 1e-2 * abs(GreensKernel(1.0)(x, y))

    def test_near_field_law(self):
        kern = GreensKernel(1.0, mode="table", table=self._table(1.0))
        assert kern([0, 0, 0], [0.01, 0, 0]) == pytest.approx(1 / (4 * np.pi * 0.01))

    def test_outside_table(self):
        kern = GreensKernel(1.0, mode="table", table=self._table(1.0))
        with pytest.raises(InputError):
            kern([0, 0, 0], [3, 0, 0])

    def test_table_required(self):
        with pytest.raises(InputError):
            GreensKernel(1.0, mode="table")

    def test_load(self, tmp_path):
        table = self._table(0.5)
        table.samples.to_binary(tmp_path / "t.sbgf")
        back = KernelTable.load(tmp_path / "t.sbgf")
        assert np.array_equal(back.samples.values, table.samples.values)


class TestBoxPotential:
    def test_cube_self_integral_against_face_quadrature(self):
        # int_cube dy/|y| = (1/2) int_sphere R^2 dOmega = 6 * (1/4) int_face dy dz / sqrt(1/4 + y^2 + z^2)
        face, _ = integrate.dblquad(lambda z, y: 1 / np.sqrt(0.25 + y * y + z * z), -0.5, 0.5, -0.5, 0.5,
                                    epsabs=1e-13, epsrel=1e-13)
        assert CUBE_SELF_INTEGRAL == pytest.approx(1.5 * face, rel=1e-11)
        got = box_inverse_distance_integral(np.zeros(3), -0.5 * np.ones(3), 0.5 * np.ones(3))
        assert got == pytest.approx(CUBE_SELF_INTEGRAL, rel=1e-13)

    def test_far_point_against_cubature(self):
        x = np.array([1.7, -0.4, 0.9])
        lo, hi = np.array([0.0, 0.0, 0.0]), np.array([0.5, 0.3, 0.2])
        ref, _ = integrate.tplquad(lambda z, y, xx: 1 / np.linalg.norm(x - [xx, y, z]), 0, 0.5, 0, 0.3, 0, 0.2,
                                   epsabs=1e-13, epsrel=1e-12)
        assert box_inverse_distance_integral(x, lo, hi) == pytest.approx(ref, rel=1e-10)

    @given(vec, st.floats(-1, 1), st.integers(0, 2))
    def test_additive_under_splitting(self, x, cut, axis):
        lo, hi = -np.ones(3), np.ones(3)
        mid_hi, mid_lo = hi.copy(), lo.copy()
        mid_hi[axis] = cut
        mid_lo[axis] = cut
        assume(-0.999 < cut < 0.999)
        whole = box_inverse_distance_integral(x, lo, hi)
        parts = box_inverse_distance_integral(x, lo, mid_hi) + box_inverse_distance_integral(x, mid_lo, hi)
        assert parts == pytest.approx(whole, rel=1e-10)

    @given(st.floats(0.1, 3))
    def test_scaling(self, s):
        # int over s*box of dy/|s x - y| = s^2 int over box of dy/|x - y|
        x, lo, hi = np.array([0.2, 0.1, -0.3]), np.array([-0.5, 0.0, -0.4]), np.array([0.5, 0.4, 0.4])
        base = box_inverse_distance_integral(x, lo, hi)
        assert box_inverse_distance_integral(s * x, s * lo, s * hi) == pytest.approx(s * s * base, rel=1e-11)
