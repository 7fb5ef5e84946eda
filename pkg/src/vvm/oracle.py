"""Ground-truth computations used by tests and the synthetic posterior-mean study.

Nothing here shares code paths with the EP/ADF machinery: the posterior
mean comes from importance sampling and the tilted moments from
adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import logsumexp, ndtr
from scipy.stats import multivariate_t, norm


class DegenerateWeights(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 200_000
    seed: int = 0
    method: str = "self_normalized_importance"
    n_pilot: int = 20_000
    df: float = 5.0
    min_ess: float = 100.0

    def __post_init__(self):
        if self.n_samples < 1000:
            raise ValueError("n_samples must be at least 1000")
        if self.method not in ("self_normalized_importance", "rejection"):
            raise ValueError(f"unknown sampling method {self.method!r}")


def _sign_counts(data, w):
    positive = (w @ data.T) > 0
    n_pos = positive.sum(axis=1)
    return n_pos, data.shape[0] - n_pos


def _log_lik_counts(n_pos, n_neg, eps):
    if eps > 0:
        return n_pos * math.log1p(-eps) + n_neg * math.log(eps)
    return np.where(n_neg > 0, -np.inf, 0.0)


def _log_lik(data, w, eps):
    """Sum over examples of log f(x.w) for a batch of weight vectors w (n x d)."""
    if len(data) == 0:
        return np.zeros(len(w))
    return _log_lik_counts(*_sign_counts(data, w), eps)


def _ess(log_w):
    w = np.exp(log_w - logsumexp(log_w))
    return 1.0 / np.sum(w * w), w


def _gaussian_logpdf(w, mean, cov):
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (w - mean).T)
    return -0.5 * np.sum(z * z, axis=0) - np.log(np.diag(chol)).sum() - 0.5 * len(mean) * math.log(2 * math.pi)


def _weighted_fit(samples, weights, inflate=1.5):
    mean = weights @ samples
    centered = samples - mean
    cov = (centered.T * weights) @ centered
    cov = 0.5 * (cov + cov.T) * inflate + 1e-9 * np.eye(len(mean))
    return mean, cov


def _tempered_eps(eps, beta):
    return 0.5 * (1.0 - beta) + eps * beta


def _importance(prior, data, eps, cfg, rng):
    d = prior.dim
    log_prior = lambda w: _gaussian_logpdf(w, prior.mean, prior.covariance)
    prop_mean, prop_cov = prior.mean.copy(), prior.covariance.copy()
    beta = 0.0
    # anneal the label noise from 1/2 (flat) down to eps, refitting a t proposal at each stage
    for _ in range(200):
        if beta >= 1.0:
            break
        dist = multivariate_t(prop_mean, prop_cov * (cfg.df - 2) / cfg.df, df=cfg.df, seed=rng)
        w = dist.rvs(size=cfg.n_pilot).reshape(cfg.n_pilot, d)
        base = log_prior(w) - dist.logpdf(w)
        counts = _sign_counts(data, w) if len(data) else (np.zeros(len(w)), np.zeros(len(w)))

        def ess_at(b):
            return _ess(base + _log_lik_counts(*counts, _tempered_eps(eps, b)))[0]

        # largest step that keeps at least half of the current effective sample size
        target = 0.5 * ess_at(beta)
        if ess_at(1.0) >= target:
            beta = 1.0
        else:
            lo, hi = beta, 1.0
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                if ess_at(mid) >= target:
                    lo = mid
                else:
                    hi = mid
            beta = max(lo, beta + 1e-3)
        _, weights = _ess(base + _log_lik_counts(*counts, _tempered_eps(eps, beta)))
        prop_mean, prop_cov = _weighted_fit(w, weights)

    dist = multivariate_t(prop_mean, prop_cov * (cfg.df - 2) / cfg.df, df=cfg.df, seed=rng)
    w = dist.rvs(size=cfg.n_samples).reshape(cfg.n_samples, d)
    log_w = log_prior(w) - dist.logpdf(w) + _log_lik(data, w, eps)
    return w, log_w


def _rejection(prior, data, eps, cfg, rng):
    chol = np.linalg.cholesky(prior.covariance)
    w = prior.mean + rng.standard_normal((cfg.n_samples, prior.dim)) @ chol.T
    log_accept = _log_lik(data, w, eps) - len(data) * math.log1p(-eps)
    keep = np.log(rng.uniform(size=cfg.n_samples)) < log_accept
    log_w = np.where(keep, 0.0, -np.inf)
    return w, log_w


def posterior_mean_mc(prior, data, lik, cfg=SamplerConfig()):
    """Monte Carlo estimate of E[w | data] under prior x prod f(x_t; w).

    Returns ``(mean, stderr)``; the standard error is the weighted
    per-coordinate standard deviation over sqrt(ESS). Raises
    DegenerateWeights if the effective sample size falls below
    ``cfg.min_ess``.
    """
    data = np.asarray(data, dtype=float).reshape(-1, prior.dim)
    rng = np.random.default_rng(cfg.seed)
    if cfg.method == "rejection":
        w, log_w = _rejection(prior, data, lik.epsilon, cfg, rng)
    else:
        w, log_w = _importance(prior, data, lik.epsilon, cfg, rng)
    if not np.isfinite(log_w).any():
        raise DegenerateWeights("every sample has zero weight")
    ess, weights = _ess(log_w)
    if ess < cfg.min_ess:
        raise DegenerateWeights(f"effective sample size {ess:.1f} is below {cfg.min_ess}")
    mean = weights @ w
    var = weights @ (w - mean) ** 2
    return mean, np.sqrt(var / ess)


def _pieces(s0):
    """Integration intervals in standardized units with breakpoints near the boundary s0."""
    span = 40.0
    lo_side = [(-span + min(s0, 0.0), s0, "neg")]
    hi_side = [(s0, max(s0, 0.0) + span, "pos")]
    return lo_side + hi_side


def _side_integral(fn, a, b, s0):
    mass = max(float(ndtr(b) - ndtr(a)), 1e-300)
    # the density can sit within 1/|s0| of the boundary, so give quad breakpoints there
    scale = 1.0 / max(1.0, abs(s0))
    pts = [p for p in s0 + scale * np.array([-5.0, -1.0, -0.1, 0.1, 1.0, 5.0]) if a < p < b]
    if a < 0.0 < b:
        pts.append(0.0)
    return integrate.quad(fn, a, b, points=sorted(pts) or None, epsabs=1e-14 * mass, epsrel=1e-12, limit=500)[0]


def _standardized_tilt(m_u, v_u, lik):
    s0 = -m_u / math.sqrt(v_u)
    levels = {"neg": lik.epsilon, "pos": 1.0 - lik.epsilon}
    pieces = [(a, b, levels[side]) for a, b, side in _pieces(s0) if levels[side] > 0]

    def moment(fn):
        return sum(level * _side_integral(lambda s: fn(s) * norm.pdf(s), a, b, s0) for a, b, level in pieces)

    z = moment(lambda s: 1.0)
    mean = moment(lambda s: s) / z
    var = moment(lambda s: (s - mean) ** 2) / z
    return z, mean, var, s0


def tilt_moments_quadrature_1d(m_u, v_u, lik):
    """(Z, mean, var) of f(u) N(u; m_u, v_u) by adaptive quadrature on each side of 0."""
    sd = math.sqrt(v_u)
    z, mean, var, _ = _standardized_tilt(m_u, v_u, lik)
    return z, m_u + sd * mean, v_u * var


def kl_tilted_quadrature(m_u, v_u, lik, posterior):
    """KL(f N(m_u, v_u) / Z || N(posterior)) by quadrature."""
    sd = math.sqrt(v_u)
    z, _, _, s0 = _standardized_tilt(m_u, v_u, lik)
    m_p, v_p = posterior
    total = 0.0
    for a, b, side in _pieces(s0):
        level = lik.epsilon if side == "neg" else 1.0 - lik.epsilon
        if level == 0:
            continue

        def integrand(s):
            log_p = math.log(level) + norm.logpdf(s) - math.log(z)
            log_q = norm.logpdf(m_u + sd * s, m_p, math.sqrt(v_p)) + math.log(sd)
            return math.exp(log_p) * (log_p - log_q)

        total += _side_integral(integrand, a, b, s0)
    return total


def tilt_moments_quadrature_2d(mu, sigma, weights):
    """(Z, mean, cov) of sum_q weight_q 1[u in quadrant q] N(u; mu, sigma).

    ``weights`` maps sign patterns (s1, s2) to levels. The u2 integral is
    done in closed form given u1; the u1 integral by adaptive quadrature
    split at 0 and at the point where E[u2 | u1] crosses 0.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    s1 = math.sqrt(sigma[0, 0])
    slope = sigma[0, 1] / sigma[0, 0]
    cond_sd = math.sqrt(max(sigma[1, 1] - sigma[0, 1] ** 2 / sigma[0, 0], 1e-300))

    def integrand(u1):
        c = mu[1] + slope * (u1 - mu[0])
        a = c / cond_sd
        p_up, dens = ndtr(a), norm.pdf(a)
        m_up = c * p_up + cond_sd * dens
        q_up = (c * c + cond_sd**2) * p_up + c * cond_sd * dens
        p_dn, m_dn, q_dn = 1.0 - p_up, c - m_up, c * c + cond_sd**2 - q_up
        side = 1 if u1 > 0 else -1
        w_up, w_dn = weights[(side, 1)], weights[(side, -1)]
        mass = w_up * p_up + w_dn * p_dn
        first2 = w_up * m_up + w_dn * m_dn
        second2 = w_up * q_up + w_dn * q_dn
        pdf = norm.pdf(u1, mu[0], s1)
        return pdf * np.array([mass, u1 * mass, first2, u1 * u1 * mass, second2, u1 * first2])

    lo, hi = mu[0] - 12 * s1, mu[0] + 12 * s1
    candidates = [0.0]
    if slope != 0:
        # E[u2 | u1] crosses zero here; the conditional switches sides over a width cond_sd / |slope|
        cross = mu[0] - mu[1] / slope
        width = cond_sd / abs(slope)
        candidates += [cross + k * width for k in (-20, -5, -1, 0, 1, 5, 20)]
    breaks = sorted({lo, hi, *(p for p in candidates if lo < p < hi)})
    total = np.zeros(6)
    for a, b in zip(breaks[:-1], breaks[1:]):
        total += integrate.quad_vec(integrand, a, b, epsabs=1e-14, epsrel=1e-12, limit=2000)[0]
    z = total[0]
    mean = total[1:3] / z
    cov = np.array([[total[3], total[5]], [total[5], total[4]]]) / z - np.outer(mean, mean)
    return z, mean, cov
