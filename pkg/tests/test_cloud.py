import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smallbodies.cloud import (ParticleCloud, RegimeViolation, _hilbert_order, audit_regime, count_in_subdomain,
                               expected_count, generate_cloud)
from smallbodies.medium import Ball, Box, Constant, Expression, InputError, Medium, Piecewise

CUBE = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def quiet_cloud(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return generate_cloud(*args, **kwargs)


class TestCounts:
    def test_kappa_one(self):
        assert quiet_cloud(CUBE, 1.0, 0.0, 0.01, 1.0).M == 100

    def test_kappa_half(self):
        cloud = generate_cloud(CUBE, 1.0, 1.0, 0.01, 0.5)
        assert cloud.M == 1000
        assert audit_regime(cloud, Medium(CUBE)).passed

    def test_kappa_zero_count_and_overcrowding(self):
        # 200 balls of radius 0.1 cannot fit disjointly in the unit cube
        assert expected_count(CUBE, Constant(2.0), 0.1, 0.0) == pytest.approx(200.0)
        with pytest.raises(RegimeViolation):
            quiet_cloud(CUBE, 2.0, 0.0, 0.1, 0.0)

    def test_radius_too_large(self):
        with pytest.raises(RegimeViolation):
            generate_cloud(CUBE, 1.0, 0.0, 0.3, 0.5)

    def test_zero_density_gives_empty_cloud(self):
        cloud = generate_cloud(CUBE, 0.0, 0.0, 0.01, 0.5)
        assert cloud.M == 0
        assert count_in_subdomain(cloud, CUBE) == 0

    def test_whole_domain_count(self):
        cloud = generate_cloud(CUBE, 1.0, 0.0, 0.02, 0.5)
        assert count_in_subdomain(cloud, CUBE) == cloud.M

    @pytest.mark.parametrize("placement", ["lattice", "jitter"])
    def test_left_half(self, placement):
        cloud = quiet_cloud(CUBE, 1.0, 0.0, 0.01, 1.0, placement=placement)
        count = count_in_subdomain(cloud, Box((0, 0, 0), (0.5, 1, 1)))
        # rounding of at most one per lattice cell on the cut plane, about M^(2/3) of them
        assert abs(count - 50) <= cloud.M ** (2 / 3)

    def test_empty_subdomain(self):
        right = Box((0.5, 0, 0), (1, 1, 1))
        density = Piecewise(((Box((0, 0, 0), (0.5, 1, 1)), 1.0),), 0.0)
        cloud = generate_cloud(CUBE, density, 0.0, 0.01, 0.5)
        assert count_in_subdomain(cloud, right) <= cloud.M ** (2 / 3)

    def test_count_ratio_tends_to_one(self):
        density = Expression("1 + x")
        sub = Box((0, 0, 0), (0.5, 0.5, 1))
        gaps = []
        for a in (0.04, 0.02, 0.01):
            cloud = generate_cloud(CUBE, density, 0.0, a, 0.5)
            expected = a ** (0.5 - 2) * 0.25 * 1.25
            gaps.append(abs(count_in_subdomain(cloud, sub) / expected - 1))
        assert gaps[-1] < gaps[0] and gaps[-1] < 0.05

    def test_kappa_outside_range(self):
        with pytest.raises(InputError):
            generate_cloud(CUBE, 1.0, 0.0, 0.01, 1.5)

    def test_unknown_placement(self):
        with pytest.raises(InputError):
            generate_cloud(CUBE, 1.0, 0.0, 0.01, 0.5, placement="grid")

    def test_endpoint_kappa_warns(self):
        with pytest.warns(UserWarning):
            generate_cloud(CUBE, 1.0, 0.0, 0.01, 1.0)


class TestPlacementInvariants:
    @given(st.floats(0.02, 0.12), st.floats(0.2, 0.8), st.integers(0, 5))
    def test_disjoint_inside_and_exact_count(self, a, kappa, seed):
        domain = Ball((0.0, 0.0, 0.0), 1.0)
        density = Expression("1 + 0.5*x")
        try:
            generate_cloud(domain, density, 0.0, a, kappa, placement="lattice")
        except RegimeViolation:
            return
        # whenever the lattice fits, jitter must too
        cloud = generate_cloud(domain, density, 0.0, a, kappa, placement="jitter", seed=seed)
        assert cloud.M == round(expected_count(domain, density, a, kappa))
        assert cloud.min_distance() >= 2 * a
        assert np.all(domain.depth(cloud.centers) >= a - 1e-12)

    def test_poisson_disk(self):
        cloud = generate_cloud(CUBE, 1.0, 0.0, 0.04, 0.5, placement="poisson", seed=3)
        assert cloud.M == round(0.04 ** -1.5)
        assert cloud.min_distance() >= 0.08

    def test_determinism(self):
        for placement in ("lattice", "jitter", "poisson"):
            c1 = generate_cloud(CUBE, 1.0, -0.1j, 0.04, 0.5, placement=placement, seed=11)
            c2 = generate_cloud(CUBE, 1.0, -0.1j, 0.04, 0.5, placement=placement, seed=11)
            assert np.array_equal(c1.centers, c2.centers)

    def test_seed_changes_jitter(self):
        c1 = generate_cloud(CUBE, 1.0, 0.0, 0.04, 0.5, seed=1)
        c2 = generate_cloud(CUBE, 1.0, 0.0, 0.04, 0.5, seed=2)
        assert not np.array_equal(c1.centers, c2.centers)

    def test_jitter_bounded_by_quarter_cell(self):
        lat = generate_cloud(CUBE, 1.0, 0.0, 0.02, 0.5, placement="lattice")
        jit = generate_cloud(CUBE, 1.0, 0.0, 0.02, 0.5, placement="jitter")
        spacing = (1.0 / lat.M) ** (1 / 3)
        assert np.max(np.abs(jit.centers - lat.centers)) <= 0.25 * spacing * 1.2

    def test_jitter_fraction_limit(self):
        with pytest.raises(InputError):
            generate_cloud(CUBE, 1.0, 0.0, 0.02, 0.5, jitter=0.5)

    def test_hilbert_order_is_permutation_of_neighbours(self):
        order = _hilbert_order((4, 4, 4))
        assert sorted(order) == list(range(64))
        idx = np.stack(np.unravel_index(order, (4, 4, 4)), axis=-1)
        steps = np.abs(np.diff(idx, axis=0)).sum(axis=1)
        assert np.all(steps == 1)


class TestCloudObject:
    def test_zeta_and_weight(self):
        cloud = ParticleCloud(np.zeros((1, 3)), 0.01, 0.5, [1.0])
        assert cloud.zeta[0] == pytest.approx(10.0)
        assert cloud.weight == pytest.approx(0.01**1.5)

    def test_rejects_gain(self):
        with pytest.raises(InputError):
            ParticleCloud(np.zeros((1, 3)), 0.01, 0.5, [1j])

    def test_immutable(self):
        cloud = ParticleCloud(np.zeros((1, 3)), 0.01, 0.5, [1.0])
        with pytest.raises(ValueError):
            cloud.centers[0, 0] = 1.0

    def test_csv_round_trip(self, tmp_path):
        cloud = generate_cloud(CUBE, 1.0, Expression("-0.1j*(1 + x)"), 0.04, 0.5, seed=4)
        cloud.to_csv(tmp_path / "c.csv")
        back = ParticleCloud.from_csv(tmp_path / "c.csv")
        assert np.array_equal(back.centers, cloud.centers)
        assert np.array_equal(back.h_values, cloud.h_values)
        assert back.params["seed"] == 4


class TestAudit:
    def test_reported_values(self):
        cloud = generate_cloud(CUBE, 1.0, 1.0, 0.01, 0.5)
        report = audit_regime(cloud, Medium(CUBE))
        assert report.ka == pytest.approx(0.01) and report.ka_ok
        assert report.max_zeta_a == pytest.approx(0.1)

    def test_overlap_flag(self):
        cloud = ParticleCloud(np.array([[0.5, 0.5, 0.5], [0.515, 0.5, 0.5]]), 0.01, 0.5, [1.0, 1.0])
        report = audit_regime(cloud, Medium(CUBE))
        assert not report.disjoint and not report.passed

    def test_zeta_a_near_kappa_one(self):
        cloud = ParticleCloud(np.array([[0.5, 0.5, 0.5]]), 0.01, 0.99, [1.0])
        report = audit_regime(cloud, Medium(CUBE))
        assert report.max_zeta_a == pytest.approx(0.01**0.01)
        assert not report.zeta_a_ok

    def test_large_ka(self):
        cloud = ParticleCloud(np.array([[0.5, 0.5, 0.5]]), 0.2, 0.5, [1.0])
        assert not audit_regime(cloud, Medium(CUBE, omega=1.0)).ka_ok

    def test_as_dict(self):
        report = audit_regime(generate_cloud(CUBE, 1.0, 1.0, 0.02, 0.5), Medium(CUBE))
        d = report.as_dict()
        assert d["passed"] is True and "spacing_ratio" in d
