"""Exact moments of a Gaussian times two step-likelihood factors."""

from __future__ import annotations

import math

import numpy as np

from .bvn import orthant_moments
from .gaussian import MomentGaussian, symmetrize
from .likelihood import StepLikelihood, adf_moments

# below this 1 - rho^2 the pair is handled as one direction
PARALLEL_TOL = 1e-9


class ParallelDirections(ValueError):
    pass


def quadrant_levels(eps):
    """Likelihood level on each sign pattern (s1, s2) of (u1, u2)."""
    hi, lo = 1.0 - eps, eps
    return {(1, 1): hi * hi, (1, -1): hi * lo, (-1, 1): lo * hi, (-1, -1): lo * lo}


def tilted_moments_2d(mu, sigma, levels):
    """Moments of sum_q level_q 1[u in quadrant q] N(u; mu, sigma) in two dimensions.

    Returns ``(Z, mean, cov)`` with the mean and covariance of the
    normalized product. Raises ParallelDirections if the two coordinates
    are (numerically) perfectly correlated.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sd = np.sqrt(np.diag(sigma))
    rho = float(sigma[0, 1] / (sd[0] * sd[1]))
    if 1.0 - rho * rho < PARALLEL_TOL:
        raise ParallelDirections(f"correlation {rho!r} is too close to +/-1")
    std_mu = mu / sd
    z = 0.0
    first = np.zeros(2)
    second = np.zeros((2, 2))
    for (s1, s2), level in levels.items():
        if level == 0.0:
            continue
        p, m1, m2, s11, s22, s12 = orthant_moments(-s1 * std_mu[0], -s2 * std_mu[1], s1 * s2 * rho)
        z += level * p
        first += level * np.array([s1 * m1, s2 * m2])
        second += level * np.array([[s11, s1 * s2 * s12], [s1 * s2 * s12, s22]])
    mean_y = first / z
    cov_y = second / z - np.outer(mean_y, mean_y)
    mean = mu + sd * mean_y
    cov = symmetrize(cov_y * np.outer(sd, sd))
    return z, mean, cov


def _lift(cavity, directions, mu_u, sigma_u, mean_u, cov_u):
    """Lift moments of u = B'w back to w through the Gaussian conditional w | u."""
    vb = cavity.covariance @ directions
    gain = np.linalg.solve(sigma_u, vb.T).T
    mean = cavity.mean + gain @ (mean_u - mu_u)
    cov = cavity.covariance + gain @ (cov_u - sigma_u) @ gain.T
    return mean, symmetrize(cov)


def _parallel_moments(cavity, b1, b2, lik):
    vb1 = cavity.covariance @ b1
    m_u = float(cavity.mean @ b1)
    v_u = float(b1 @ vb1)
    same_side = float(b1 @ cavity.covariance @ b2) > 0
    eps = lik.epsilon
    if same_side:
        lo, hi = eps * eps, (1.0 - eps) ** 2
    else:
        lo = hi = eps * (1.0 - eps)
    if lo == hi:
        return lo, cavity.mean.copy(), cavity.covariance.copy()
    tilt = adf_moments(StepLikelihood(lo / (lo + hi)), m_u, v_u)
    z = (lo + hi) * math.exp(tilt.log_Z)
    mean = cavity.mean + vb1 * ((tilt.m_new - m_u) / v_u)
    cov = cavity.covariance + np.outer(vb1, vb1) * ((tilt.v_new - v_u) / v_u**2)
    return z, mean, symmetrize(cov)


def bivariate_tilt_moments(cavity, b1, b2, lik):
    """Normalizer, mean and covariance of f(b1; w) f(b2; w) N(w; cavity).

    Projects onto u = (b1.w, b2.w), integrates the four quadrant levels
    against the bivariate normal, and lifts back. Parallel directions
    reduce to a one-dimensional two-level step.
    """
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    directions = np.column_stack([b1, b2])
    mu_u = directions.T @ cavity.mean
    sigma_u = symmetrize(directions.T @ cavity.covariance @ directions)
    try:
        z, mean_u, cov_u = tilted_moments_2d(mu_u, sigma_u, quadrant_levels(lik.epsilon))
    except ParallelDirections:
        return _parallel_moments(cavity, b1, b2, lik)
    mean, cov = _lift(cavity, directions, mu_u, sigma_u, mean_u, cov_u)
    return z, mean, cov


def bivariate_tilt(cavity, b1, b2, lik):
    """Same as bivariate_tilt_moments but returns ``(Z, MomentGaussian)``."""
    z, mean, cov = bivariate_tilt_moments(cavity, b1, b2, lik)
    return z, MomentGaussian(mean, cov)
