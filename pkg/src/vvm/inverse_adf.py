"""Inverse ADF: recover the Gaussian prior that an ADF step mapped to given moments.

Given posterior moments (m_new, v_new) of u = x.w after one step-likelihood
update, the prior standardized margin z solves

    v z^2 + (v + m^2) h(z)^2 + (2 v + m^2) h(z) z - m^2 = 0

with (m, v) = (m_new, v_new). We divide through by v so the residual is
dimensionless, solve it with Levenberg-Marquardt, and fall back to
bracketing the signed form (z + h) / sqrt(1 - h (h + z)) = m / sqrt(v)
when the damped iteration stalls or lands on the mirror root.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .gaussian import MomentGaussian
from .likelihood import adf_moments, inverse_mills


class RootNotFound(RuntimeError):
    pass


class NoValidRoot(RuntimeError):
    pass


def moment_equation(eps, r, z):
    """Residual and derivative of the normalized moment equation at z.

    ``r`` is m_new / sqrt(v_new).
    """
    h, _, _ = inverse_mills(eps, z)
    r2 = r * r
    f = z * z + (1.0 + r2) * h * h + (2.0 + r2) * h * z - r2
    fp = 2.0 * z + (2.0 + r2) * h - h * (z + h) * ((2.0 + 2.0 * r2) * h + (2.0 + r2) * z)
    return f, fp


def _signed_equation(eps, r, z):
    h, shrink, _ = inverse_mills(eps, z)
    return (z + h) - r * math.sqrt(shrink)


def _polish(eps, r, z, f, fp, max_iter=30):
    # the residual tolerance is loose where f' is small (far-negative z when eps = 0);
    # keep taking Newton steps while they still reduce |f|
    for _ in range(max_iter):
        if f == 0.0 or fp == 0.0:
            break
        z_try = z - f / fp
        f_try, fp_try = moment_equation(eps, r, z_try)
        if not abs(f_try) < abs(f):
            break
        z, f, fp = z_try, f_try, fp_try
    return z


def _levenberg_marquardt(eps, r, z0, tol, max_iter):
    z = z0
    f, fp = moment_equation(eps, r, z)
    damping = 1e-3
    for _ in range(max_iter):
        if abs(f) <= tol:
            return _polish(eps, r, z, f, fp)
        step = -f * fp / (fp * fp + damping)
        z_try = z + step
        f_try, fp_try = moment_equation(eps, r, z_try)
        if abs(f_try) < abs(f):
            z, f, fp = z_try, f_try, fp_try
            damping = max(damping * 0.1, 1e-15)
        else:
            damping *= 10.0
            if damping > 1e15:
                break
    if abs(f) <= tol:
        return z
    raise RootNotFound(f"no root after {max_iter} iterations (|f| = {abs(f):.3g})")


def _recover(lik, m_new, v_new, z):
    """Prior (m_h, v_h) implied by a root z, or None if it is not a valid preimage."""
    h, shrink, _ = inverse_mills(lik.epsilon, z)
    denom = z + h
    if abs(denom) > 1e-8 * (abs(z) + h + 1.0):
        v_h = (m_new / denom) ** 2
    else:
        # z + h ~ 0 only when m_new ~ 0; the variance equation stays well posed
        v_h = v_new / shrink
    if not (np.isfinite(v_h) and v_h > 0):
        return None
    m_h = z * math.sqrt(v_h)
    fwd = adf_moments(lik, m_h, v_h)
    scale = abs(m_new) + math.sqrt(v_new)
    if abs(fwd.m_new - m_new) > 1e-8 * scale or abs(fwd.v_new - v_new) > 1e-8 * v_new:
        return None
    return m_h, v_h


def inverse_adf(lik, m_new, v_new, max_iter=200, bracket=5.0):
    """Solve for the prior marginal (m_h, v_h) and its standardized margin z.

    Returns ``(m_h, v_h, z_hat)``. Raises RootNotFound if no root can be
    located and NoValidRoot if the roots found do not map forward onto
    (m_new, v_new).
    """
    if not v_new > 0:
        raise ValueError(f"posterior variance must be positive, got {v_new}")
    eps = lik.epsilon
    r = m_new / math.sqrt(v_new)
    tol = 1e-10 * max(1.0, r * r)

    tried = 0
    try:
        z = _levenberg_marquardt(eps, r, r, tol, max_iter)
    except RootNotFound:
        pass
    else:
        tried = 1
        prior = _recover(lik, m_new, v_new, z)
        if prior is not None:
            return prior[0], prior[1], z

    # The squared equation also has a mirror root with the wrong sign of m_new;
    # near m_new = 0 the two nearly coincide. The signed form below is
    # monotone in z, so a single sign change brackets the valid root.
    lo, hi = r - bracket, r + bracket
    s_lo, s_hi = _signed_equation(eps, r, lo), _signed_equation(eps, r, hi)
    if s_lo * s_hi > 0.0:
        if tried:
            raise NoValidRoot(f"Levenberg-Marquardt root is not a valid preimage and no root lies within +/-{bracket} of {r:.6g}")
        raise RootNotFound(f"no sign change within +/-{bracket} of {r:.6g}")
    z = brentq(lambda t: _signed_equation(eps, r, t), lo, hi, xtol=1e-15, rtol=1e-15, maxiter=max_iter)
    prior = _recover(lik, m_new, v_new, z)
    if prior is None:
        raise NoValidRoot(f"bracketed root {z:.6g} does not reproduce the target moments")
    return prior[0], prior[1], z


def inverse_adf_gaussian(lik, target, x):
    """Full-dimensional prior N(m, V) whose ADF update along x yields ``target``.

    A rank-1 likelihood only changes the covariance along V x, so with
    a = V x = V_target x / (1 - h (h + z)) the prior is
    V = V_target + a a' h (h + z) / v_h and m = m_target - h a / sqrt(v_h).
    Returns ``(prior, z_hat)``.
    """
    x = np.asarray(x, dtype=float)
    vx_new = target.covariance @ x
    m_new = float(target.mean @ x)
    v_new = float(x @ vx_new)
    m_h, v_h, z = inverse_adf(lik, m_new, v_new)
    h, shrink, _ = inverse_mills(lik.epsilon, z)
    a = vx_new / shrink
    gain = h * (h + z) / v_h
    cov = target.covariance + gain * np.outer(a, a)
    mean = target.mean - h * a / math.sqrt(v_h)
    return MomentGaussian(mean, 0.5 * (cov + cov.T)), z
