"""Expectation propagation over a set of step-likelihood factors, plus ADF and prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import (
    MomentGaussian,
    NaturalGaussian,
    SiteFactor,
    marginal_1d,
    symmetrize,
    to_moments,
    to_natural,
)
from .likelihood import adf_moments, predictive_probability, site_divergence, site_from_tilt


_MAX_DAMPING_RETRIES = 5


@dataclass(frozen=True)
class EpConfig:
    max_sweeps: int = 5
    damping: float = 1.0
    convergence_tol: float = 1e-6
    min_cavity_variance: float = 1e-12

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.convergence_tol <= 0 or self.min_cavity_variance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class EpResult:
    surrogate: MomentGaussian
    sites: list
    divergences: list
    converged: bool
    sweeps_used: int
    natural: NaturalGaussian = field(repr=False, default=None)
    cavities: list = field(repr=False, default_factory=list)
    log_Z: list = field(repr=False, default_factory=list)


def as_natural(g):
    return g if isinstance(g, NaturalGaussian) else to_natural(g)


def total_natural(residual, points, taus, nus):
    """Natural parameters of residual x prod of rank-1 sites."""
    prec = residual.precision.copy()
    shift = residual.shift.copy()
    if len(points):
        pts = np.asarray(points, dtype=float)
        taus = np.asarray(taus, dtype=float)
        prec += (pts.T * taus) @ pts
        shift += pts.T @ np.asarray(nus, dtype=float)
    return NaturalGaussian(symmetrize(prec), shift)


def site_diagnostics(q, points, taus, nus, lik):
    """Cavity marginals, log normalizers and divergences of every site against q."""
    cavities, log_z, divergences = [], [], []
    for b, tau, nu in zip(points, taus, nus):
        m_q, v_q = marginal_1d(q, b)
        cav_prec = 1.0 / v_q - tau
        if not cav_prec > 0:
            cavities.append((math.nan, math.nan))
            log_z.append(math.nan)
            divergences.append(math.nan)
            continue
        v_c = 1.0 / cav_prec
        m_c = v_c * (m_q / v_q - nu)
        tilt = adf_moments(lik, m_c, v_c)
        cavities.append((m_c, v_c))
        log_z.append(tilt.log_Z)
        divergences.append(site_divergence(lik, (m_c, v_c), (m_q, v_q), tilt.log_Z))
    return cavities, log_z, divergences


def run_ep(residual, points, lik, cfg=EpConfig(), warm_start=None):
    """Refine rank-1 sites for each point with ``residual`` acting as the prior.

    Sites are visited in the order of ``points``. ``warm_start`` is an
    optional sequence of (tau, nu) pairs or SiteFactors aligned with
    ``points``; missing entries start at zero. Sites whose cavity
    collapses are skipped for that sweep and the run is reported as not
    converged. A site update that would break positive definiteness is
    damped by half, up to five times, and skipped if it still fails.
    """
    residual = as_natural(residual)
    pts = np.asarray(points, dtype=float).reshape(-1, residual.dim)
    n = len(pts)
    taus = np.zeros(n)
    nus = np.zeros(n)
    if warm_start is not None:
        for i, s in enumerate(warm_start):
            if s is None:
                continue
            if isinstance(s, SiteFactor):
                taus[i], nus[i] = s.precision_1d, s.shift_1d
            else:
                taus[i], nus[i] = s

    q = to_moments(total_natural(residual, pts, taus, nus))
    mean, cov = q.mean.copy(), q.covariance.copy()
    converged = n == 0
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1) if n else ():
        max_change = 0.0
        clean = True
        for i in range(n):
            b = pts[i]
            vb = cov @ b
            v_q = float(b @ vb)
            m_q = float(mean @ b)
            cav_prec = 1.0 / v_q - taus[i]
            if not cav_prec > 0 or 1.0 / cav_prec <= cfg.min_cavity_variance:
                clean = False
                continue
            v_c = 1.0 / cav_prec
            m_c = v_c * (m_q / v_q - nus[i])
            tau_new, nu_new = site_from_tilt(m_c, v_c, adf_moments(lik, m_c, v_c))
            step = cfg.damping
            for _ in range(_MAX_DAMPING_RETRIES + 1):
                d_tau = step * (tau_new - taus[i])
                d_nu = step * (nu_new - nus[i])
                denom = 1.0 + d_tau * v_q
                if denom > 0:
                    break
                step *= 0.5
            else:
                clean = False
                continue
            cov -= np.outer(vb, vb) * (d_tau / denom)
            cov = symmetrize(cov)
            mean += vb * ((d_nu - d_tau * m_q) / denom)
            taus[i] += d_tau
            nus[i] += d_nu
            max_change = max(max_change, abs(d_tau), abs(d_nu))
        if clean and max_change < cfg.convergence_tol:
            converged = True
            break

    natural = total_natural(residual, pts, taus, nus)
    surrogate = to_moments(natural)
    cavities, log_z, divergences = site_diagnostics(surrogate, pts, taus, nus, lik)
    sites = [SiteFactor(pts[i], float(taus[i]), float(nus[i])) for i in range(n)]
    return EpResult(surrogate, sites, divergences, converged, sweeps, natural, cavities, log_z)


def adf_step(state, x, lik):
    """One assumed-density filtering update of a Gaussian on signed example x."""
    x = np.asarray(x, dtype=float)
    m_h, v_h = marginal_1d(state, x)
    tilt = adf_moments(lik, m_h, v_h)
    vx = state.covariance @ x
    sd = math.sqrt(v_h)
    mean = state.mean + tilt.h * vx / sd
    cov = state.covariance - np.outer(vx, vx) * (tilt.h * (tilt.h + tilt.z) / v_h)
    return MomentGaussian(mean, symmetrize(cov))


def predict(q, x, lik):
    """Most likely label sign(m.x) (ties go to +1) and P(label = +1)."""
    m, v = marginal_1d(q, x)
    label = 1 if m >= 0 else -1
    return label, predictive_probability(lik, m, v)


__all__ = [
    "EpConfig",
    "EpResult",
    "adf_step",
    "predict",
    "run_ep",
    "site_diagnostics",
    "total_natural",
]
