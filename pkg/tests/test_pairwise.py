import math

import numpy as np
import pytest

from vvm.gaussian import MomentGaussian
from vvm.likelihood import StepLikelihood, adf_moments
from vvm.oracle import tilt_moments_quadrature_2d
from vvm.pairwise import (
    ParallelDirections,
    bivariate_tilt,
    bivariate_tilt_moments,
    quadrant_levels,
    tilted_moments_2d,
)
from conftest import random_spd


def rel_close(a, b, rel):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) <= rel * max(np.max(np.abs(b)), 1e-300)


def test_quadrant_levels():
    lv = quadrant_levels(0.1)
    assert lv[(1, 1)] == pytest.approx(0.81)
    assert lv[(1, -1)] == lv[(-1, 1)] == pytest.approx(0.09)
    assert lv[(-1, -1)] == pytest.approx(0.01)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.3])
def test_2d_moments_against_quadrature(eps, rng):
    for _ in range(15):
        mu = rng.normal(size=2) * 1.5
        sigma = random_spd(rng, 2, 0.1)
        z, mean, cov = tilted_moments_2d(mu, sigma, quadrant_levels(eps))
        zq, mq, cq = tilt_moments_quadrature_2d(mu, sigma, quadrant_levels(eps))
        assert z == pytest.approx(zq, rel=1e-9)
        np.testing.assert_allclose(mean, mq, rtol=1e-8, atol=1e-9)
        np.testing.assert_allclose(cov, cq, rtol=1e-8, atol=1e-9)


def test_near_constant_likelihood():
    cav = MomentGaussian(np.array([0.3, -0.2, 0.1]), np.diag([1.0, 2.0, 0.5]))
    z, mean, cov = bivariate_tilt_moments(cav, np.array([1.0, 0, 0]), np.array([0, 1.0, 1.0]), StepLikelihood(0.4999))
    assert z == pytest.approx(0.25, abs=1e-4)
    np.testing.assert_allclose(mean, cav.mean, atol=1e-3)
    np.testing.assert_allclose(cov, cav.covariance, atol=1e-3)


def test_independent_directions_factorize():
    lik = StepLikelihood(0.05)
    cav = MomentGaussian(np.array([0.4, -0.7, 0.2]), np.eye(3))
    b1, b2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    z, mean, cov = bivariate_tilt_moments(cav, b1, b2, lik)
    t1, t2 = adf_moments(lik, 0.4, 1.0), adf_moments(lik, -0.7, 1.0)
    assert z == pytest.approx(math.exp(t1.log_Z + t2.log_Z), rel=1e-10)
    np.testing.assert_allclose(mean, [t1.m_new, t2.m_new, 0.2], rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(np.diag(cov), [t1.v_new, t2.v_new, 1.0], rtol=1e-10)
    assert abs(cov[0, 1]) < 1e-12


def _lifted_oracle(cav, b1, b2, lik):
    B = np.column_stack([b1, b2])
    mu_u, sig_u = B.T @ cav.mean, B.T @ cav.covariance @ B
    z, m_u, c_u = tilt_moments_quadrature_2d(mu_u, sig_u, quadrant_levels(lik.epsilon))
    gain = np.linalg.solve(sig_u, (cav.covariance @ B).T).T
    return z, cav.mean + gain @ (m_u - mu_u), cav.covariance + gain @ (c_u - sig_u) @ gain.T


def test_lifted_moments_against_quadrature(rng):
    lik = StepLikelihood(0.1)
    for _ in range(20):
        cav = MomentGaussian(rng.normal(size=3), random_spd(rng, 3))
        b1, b2 = rng.normal(size=3), rng.normal(size=3)
        z, mean, cov = bivariate_tilt_moments(cav, b1, b2, lik)
        zq, mq, cq = _lifted_oracle(cav, b1, b2, lik)
        assert z == pytest.approx(zq, rel=1e-8)
        assert rel_close(mean, mq, 1e-7) and rel_close(cov, cq, 1e-7)


def test_returns_moment_gaussian():
    z, g = bivariate_tilt(MomentGaussian.standard(2), np.array([1.0, 0.2]), np.array([0.1, 1.0]), StepLikelihood())
    assert isinstance(g, MomentGaussian) and 0 < z < 1


def test_parallel_directions_raise_in_2d():
    with pytest.raises(ParallelDirections):
        tilted_moments_2d(np.zeros(2), np.ones((2, 2)), quadrant_levels(0.1))


@pytest.mark.parametrize("eps", [0.0, 0.1])
def test_same_direction_pair_is_two_level_step(eps):
    lik = StepLikelihood(eps)
    cav = MomentGaussian(np.array([0.3, -0.1]), np.array([[1.0, 0.2], [0.2, 0.7]]))
    b = np.array([1.0, 0.5])
    z, mean, cov = bivariate_tilt_moments(cav, b, 2.0 * b, lik)
    # brute force: the product is (1-eps)^2 above the line and eps^2 below it
    m_u, v_u = float(cav.mean @ b), float(b @ cav.covariance @ b)
    from scipy.stats import norm
    p = norm.sf(0.0, m_u, math.sqrt(v_u))
    assert z == pytest.approx((1 - eps) ** 2 * p + eps**2 * (1 - p), rel=1e-12)
    t = adf_moments(StepLikelihood(eps * eps / (eps * eps + (1 - eps) ** 2)), m_u, v_u)
    assert float(mean @ b) == pytest.approx(t.m_new, rel=1e-12)


def test_opposite_direction_pair_is_constant():
    lik = StepLikelihood(0.1)
    cav = MomentGaussian(np.array([0.3, -0.1]), np.eye(2))
    b = np.array([1.0, 0.5])
    z, mean, cov = bivariate_tilt_moments(cav, b, -b, lik)
    assert z == pytest.approx(0.09, rel=1e-14)
    np.testing.assert_array_equal(mean, cav.mean)


def test_pair_differs_from_independent_product_for_close_points():
    lik = StepLikelihood(0.01)
    cav = MomentGaussian.standard(3)
    b1, b2 = np.array([1.0, 0.1, 0.0]), np.array([1.0, 0.12, 0.0])
    z, _, _ = bivariate_tilt_moments(cav, b1, b2, lik)
    z1 = math.exp(adf_moments(lik, 0.0, b1 @ b1).log_Z)
    z2 = math.exp(adf_moments(lik, 0.0, b2 @ b2).log_Z)
    assert abs(z - z1 * z2) > 1e-3


@pytest.mark.parametrize("angle_deg", [4.0, 1.0, 0.1, 0.01])
def test_near_parallel_against_quadrature(angle_deg, rng):
    # compared in the projected plane: lifting multiplies any oracle error by 1 / (1 - rho^2)
    lik = StepLikelihood(0.1)
    for _ in range(5):
        cav = MomentGaussian(rng.normal(size=3), random_spd(rng, 3))
        b1 = rng.normal(size=3)
        perp = np.cross(b1, rng.normal(size=3))
        perp *= np.linalg.norm(b1) / np.linalg.norm(perp)
        a = math.radians(angle_deg)
        b2 = math.cos(a) * b1 + math.sin(a) * perp
        B = np.column_stack([b1, b2])
        z, mean, cov = bivariate_tilt_moments(cav, b1, b2, lik)
        zq, mq, cq = tilt_moments_quadrature_2d(B.T @ cav.mean, B.T @ cav.covariance @ B,
                                                quadrant_levels(lik.epsilon))
        assert z == pytest.approx(zq, rel=1e-4)
        assert rel_close(B.T @ mean, mq, 1e-4) and rel_close(B.T @ cov @ B, cq, 1e-4)
