import math

import numpy as np
import pytest

from ldgflow.quadrature import PolarRule, SphereQuadrature, azimuthal_factors


def test_product_rule_sphere_area_and_moments():
    q = SphereQuadrature(8, 16)
    x, y, z = q.nodes
    assert q.integrate(np.ones(len(q))) == pytest.approx(4 * math.pi, rel=1e-14)
    assert q.integrate(z ** 2) == pytest.approx(4 * math.pi / 3, rel=1e-14)
    # <x^2 y^2> over the sphere is 4 pi / 15
    assert q.integrate(x ** 2 * y ** 2) == pytest.approx(4 * math.pi / 15, rel=1e-13)


def test_product_rule_degree():
    q = SphereQuadrature(5, 12)
    assert q.degree == 9
    with pytest.raises(ValueError):
        SphereQuadrature(1, 12)


def test_polar_rule_polynomials():
    rule = PolarRule()
    assert rule.integrate_polynomial(lambda x, y, z: np.ones_like(x)) == pytest.approx(
        4 * math.pi, rel=1e-13)
    val = rule.integrate_polynomial(lambda x, y, z: z ** 4)
    assert val == pytest.approx(4 * math.pi / 5, rel=1e-13)


@pytest.mark.parametrize("mu", [(0.0, 0.0), (-3.0, -1.0), (-10.0, 2.0), (1.5, -0.5)])
def test_polar_rule_matches_product_rule(mu):
    fine = SphereQuadrature(48, 96)
    rule = PolarRule()
    a = fine.moments([mu[0]], [mu[1]])
    b = rule.moments([mu[0]], [mu[1]])
    for u, v in zip(a, b):
        np.testing.assert_allclose(v, u, rtol=1e-11, atol=1e-13)


def test_uniform_density_moments():
    log_z, m, _ = PolarRule().moments([0.0], [0.0])
    assert log_z[0] == pytest.approx(math.log(4 * math.pi), abs=1e-14)
    np.testing.assert_allclose(m[:, 0], [1 / 3, 1 / 3], atol=1e-14)


def test_azimuthal_factors_continuous_across_branch_switches():
    # the asymptotic and small-argument branches join the recurrence smoothly
    for c0 in (30.0, 1e-6, 0.5):
        lo = azimuthal_factors(np.array([c0 * (1 - 1e-13)]))
        hi = azimuthal_factors(np.array([c0 * (1 + 1e-13)]))
        for a, b in zip(lo, hi):
            np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-15)


def test_depth_grows_with_concentration():
    rule = PolarRule()
    assert rule.depth_for(1.0) == rule.min_depth
    assert rule.depth_for(1e-9) > rule.depth_for(1e-3)
    assert rule.depth_for(0.0) == rule.max_depth
