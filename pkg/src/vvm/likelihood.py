"""Scalar computations for the noisy step likelihood.

The likelihood of a signed example x under weights w is

    f(x; w) = eps        if w.x <= 0
              1 - eps    if w.x > 0

Every quantity here depends on w only through the scalar u = w.x, so
all routines work with one-dimensional Gaussian marginals (m_u, v_u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, xlogy

from .gaussian import marginal_1d

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_TAIL_SWITCH = -3.0
_CF_DEPTH = 120


class InvalidVariance(ValueError):
    pass


@dataclass(frozen=True)
class StepLikelihood:
    epsilon: float = 0.01

    def __post_init__(self):
        eps = float(self.epsilon)
        if not 0.0 <= eps < 0.5:
            raise ValueError(f"labeling error rate must lie in [0, 0.5), got {eps}")
        object.__setattr__(self, "epsilon", eps)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u > 0, 1.0 - self.epsilon, self.epsilon)

    def log_factor(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(u > 0, math.log1p(-self.epsilon), np.log(self.epsilon))


@dataclass(frozen=True)
class Tilt1D:
    z: float
    h: float
    m_new: float
    v_new: float
    log_Z: float


def _mills(z):
    """Return (lam, var0): lam = pdf(z)/cdf(z) and var0 = 1 - lam (lam + z).

    var0 is the variance of a standard normal truncated to (-z, inf).
    Below the tail switch both are taken from the continued fraction of
    the Mills ratio, which avoids the cancellation in 1 - lam (lam + z).
    """
    if z >= _TAIL_SWITCH:
        lam = math.exp(-0.5 * z * z - _LOG_SQRT_2PI - float(log_ndtr(z)))
        return lam, 1.0 - lam * (lam + z)
    t = -z
    d = 0.0
    for k in range(_CF_DEPTH, 1, -1):
        d = k / (t + d)
    s = t + d
    lam = t + 1.0 / s
    return lam, (d * s - 1.0) / (s * s)


def _log_normalizer(eps, z):
    log_mass = float(log_ndtr(z))
    if eps == 0.0:
        return log_mass, log_mass
    return float(np.logaddexp(math.log(eps), math.log1p(-2.0 * eps) + log_mass)), log_mass


def inverse_mills(eps, z):
    """h(z) = (1 - 2 eps) pdf(z) / (eps + (1 - 2 eps) cdf(z)) and 1 - h (h + z)."""
    lam, var0 = _mills(z)
    log_z, log_mass = _log_normalizer(eps, z)
    if eps == 0.0:
        w = 1.0
    else:
        w = math.exp(math.log1p(-2.0 * eps) + log_mass - log_z)
    # all three terms are nonnegative, so the shrink factor keeps full relative precision
    shrink = (1.0 - w) + w * var0 + w * (1.0 - w) * lam * lam
    return w * lam, shrink, log_z


def adf_moments(lik, m_u, v_u):
    """Moments of f(u) N(u; m_u, v_u) after normalization."""
    if not v_u > 0:
        raise InvalidVariance(f"variance must be positive, got {v_u}")
    sd = math.sqrt(v_u)
    z = m_u / sd
    h, shrink, log_z = inverse_mills(lik.epsilon, z)
    return Tilt1D(z=z, h=h, m_new=m_u + h * sd, v_new=v_u * shrink, log_Z=log_z)


def site_from_tilt(m_u, v_u, tilt):
    """Rank-1 site (tau, nu) turning the cavity marginal into the tilt's moments."""
    tau = 1.0 / tilt.v_new - 1.0 / v_u
    nu = tilt.m_new / tilt.v_new - m_u / v_u
    return tau, nu


def predictive_probability(lik, m_u, v_u):
    """P(w.x > 0 label is correct) = eps + (1 - 2 eps) cdf(m_u / sqrt(v_u))."""
    return lik.epsilon + (1.0 - 2.0 * lik.epsilon) * float(ndtr(m_u / math.sqrt(v_u)))


def gaussian_kl_1d(m_p, v_p, m_q, v_q):
    """KL(N(m_p, v_p) || N(m_q, v_q))."""
    return 0.5 * (math.log(v_q / v_p) + (v_p + (m_p - m_q) ** 2) / v_q - 1.0)


@dataclass(frozen=True)
class DivergenceTerms:
    e_minus: float
    e_plus: float
    log_Z: float
    gaussian_term: float

    @property
    def total(self):
        return (self.e_minus + self.e_plus) * math.exp(-self.log_Z) + self.gaussian_term


def divergence_terms(lik, cavity, posterior, log_Z=None, threshold=0.0):
    m_u, v_u = cavity
    m_p, v_p = posterior
    if not (v_u > 0 and v_p > 0):
        raise InvalidVariance(f"variances must be positive, got {v_u}, {v_p}")
    eps = lik.epsilon
    z = (m_u - threshold) / math.sqrt(v_u)
    if log_Z is None:
        log_Z = _log_normalizer(eps, z)[0]
    e_minus = float(xlogy(eps, eps)) * float(ndtr(-z))
    e_plus = float(xlogy(1.0 - eps, 1.0 - eps)) * float(ndtr(z))
    gaussian_term = -log_Z - gaussian_kl_1d(m_p, v_p, m_u, v_u)
    return DivergenceTerms(e_minus, e_plus, log_Z, gaussian_term)


def site_divergence(lik, cavity, posterior, log_Z=None, threshold=0.0):
    """KL(tilted || posterior) for one step factor, reduced to one dimension.

    ``cavity`` and ``posterior`` are (mean, variance) pairs of the
    projection u = b.w. The expression assumes the posterior has matched
    the tilted moments, which is exact at an EP fixed point.
    """
    return divergence_terms(lik, cavity, posterior, log_Z, threshold).total


def margin(q, x):
    """Standardized margin m.x / sqrt(x' V x) under the Gaussian q."""
    m, v = marginal_1d(q, x)
    return m / math.sqrt(v)
