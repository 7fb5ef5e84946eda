"""Multivariate Gaussians in moment and natural form, plus rank-1 site factors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class NotPositiveDefinite(ValueError):
    """A precision or covariance matrix failed a Cholesky factorization."""


class DegenerateDirection(ValueError):
    """A projection direction has (numerically) zero variance."""


def symmetrize(a):
    return 0.5 * (a + a.T)


def _cholesky(a):
    try:
        return scipy.linalg.cholesky(a, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(str(exc)) from None


def spd_inverse(a):
    """Inverse of a symmetric positive definite matrix via Cholesky.

    Raises NotPositiveDefinite if the factorization fails.
    """
    chol = _cholesky(a)
    inv = scipy.linalg.cho_solve((chol, True), np.eye(a.shape[0]))
    return symmetrize(inv)


def is_positive_definite(a):
    try:
        _cholesky(a)
    except NotPositiveDefinite:
        return False
    return True


@dataclass(frozen=True)
class MomentGaussian:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self):
        return self.mean.size

    @classmethod
    def standard(cls, dim):
        return cls(np.zeros(dim), np.eye(dim))

    def to_natural(self):
        return to_natural(self)


@dataclass(frozen=True)
class NaturalGaussian:
    """Gaussian in canonical form: precision matrix and shift = precision @ mean.

    The precision may be indefinite; this is legal for factor products
    and residual corrections but not for conversion to moments.
    """

    precision: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        prec = np.asarray(self.precision, dtype=float)
        shift = np.asarray(self.shift, dtype=float)
        if prec.shape != (shift.size, shift.size):
            raise ValueError(f"precision shape {prec.shape} does not match shift of size {shift.size}")
        object.__setattr__(self, "precision", prec)
        object.__setattr__(self, "shift", shift)

    @property
    def dim(self):
        return self.shift.size

    @classmethod
    def standard(cls, dim):
        return cls(np.eye(dim), np.zeros(dim))

    def __mul__(self, other):
        return NaturalGaussian(self.precision + other.precision, self.shift + other.shift)

    def __truediv__(self, other):
        return NaturalGaussian(self.precision - other.precision, self.shift - other.shift)

    def to_moments(self):
        return to_moments(self)


@dataclass(frozen=True)
class SiteFactor:
    """Rank-1 Gaussian factor exp(-tau/2 (w.b)^2 + nu w.b) along direction b."""

    direction: np.ndarray
    precision_1d: float = 0.0
    shift_1d: float = 0.0

    def as_natural(self):
        b = np.asarray(self.direction, dtype=float)
        return NaturalGaussian(self.precision_1d * np.outer(b, b), self.shift_1d * b)


def to_moments(g):
    """Convert a NaturalGaussian to moment form.

    Raises NotPositiveDefinite if the precision is not positive definite.
    """
    prec = symmetrize(g.precision)
    chol = _cholesky(prec)
    cov = symmetrize(scipy.linalg.cho_solve((chol, True), np.eye(g.dim)))
    mean = scipy.linalg.cho_solve((chol, True), g.shift)
    return MomentGaussian(mean, cov)


def to_natural(g):
    """Convert a MomentGaussian to natural form (covariance must be SPD)."""
    cov = symmetrize(g.covariance)
    chol = _cholesky(cov)
    prec = symmetrize(scipy.linalg.cho_solve((chol, True), np.eye(g.dim)))
    return NaturalGaussian(prec, prec @ g.mean)


def multiply_site(g, site, sign=1):
    """Multiply (sign=+1) or divide (sign=-1) a natural Gaussian by a rank-1 site."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    b = np.asarray(site.direction, dtype=float)
    prec = g.precision + sign * site.precision_1d * np.outer(b, b)
    shift = g.shift + sign * site.shift_1d * b
    return NaturalGaussian(symmetrize(prec), shift)


def marginal_1d(g, x):
    """Mean and variance of x.w under w ~ g."""
    x = np.asarray(x, dtype=float)
    m = float(g.mean @ x)
    v = float(x @ g.covariance @ x)
    scale = float(np.abs(g.covariance).max()) * float(x @ x)
    if not v > 64 * np.finfo(float).eps * max(scale, np.finfo(float).tiny):
        raise DegenerateDirection(f"projected variance {v!r} is not positive")
    return m, v
