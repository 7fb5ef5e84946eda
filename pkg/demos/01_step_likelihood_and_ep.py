"""
Moment matching under a noisy step likelihood
==============================================

A single labelled point x (label folded in, so y = +1) has likelihood

    f(w) = eps + (1 - 2 eps) * 1[x . w > 0]

Against a Gaussian prior, ADF replaces the exact posterior by the Gaussian
with the same mean and covariance. Inverse ADF goes the other way: given
the matched Gaussian it recovers the prior that produced it. EP revisits
every point until the Gaussian sites agree with each other.
"""

import numpy as np

from vvm import MomentGaussian, StepLikelihood, adf_moments, adf_step, ep_batch, inverse_adf
from vvm.features import prepare_stream_record

np.set_printoptions(precision=4, suppress=True)

# one dimension first: the projected prior N(m, v) along x
lik = StepLikelihood(0.1)
for m in (-2.0, 0.0, 2.0):
    t = adf_moments(lik, m, 1.0)
    print(f"prior N({m:+.1f}, 1) -> matched N({t.m_new:+.4f}, {t.v_new:.4f}), log Z = {t.log_Z:.4f}")

# far on the wrong side, a noisy label widens the posterior instead of shrinking it
t = adf_moments(StepLikelihood(0.1), -3.0, 1.0)
print("wrong side, eps = 0.1: variance", round(t.v_new, 4), "> 1")

# inverse ADF recovers the prior from the matched moments
t = adf_moments(lik, 0.7, 2.5)
m_hat, v_hat, _ = inverse_adf(lik, t.m_new, t.v_new)
print(f"inverse ADF: ({m_hat:.10f}, {v_hat:.10f}) vs (0.7, 2.5)")

# a small stream in 3-D: raw 2-D inputs plus a bias feature, label folded in
rng = np.random.default_rng(0)
raw = rng.standard_normal((60, 2))
labels = np.where(raw @ [1.0, -1.0] + 0.3 > 0, 1, -1)
points = np.array([prepare_stream_record(r, int(y)) for r, y in zip(raw, labels)])

q = MomentGaussian.standard(3)
for p in points:
    q = adf_step(q, p, lik)
ep = ep_batch(points, 0.1)

# ADF sees each point once, so its answer depends on the order; EP does not
q_rev = MomentGaussian.standard(3)
for p in points[::-1]:
    q_rev = adf_step(q_rev, p, lik)
print("ADF mean, forward order ", q.mean)
print("ADF mean, reversed order", q_rev.mean)
print("EP mean                 ", ep.surrogate.mean, "converged:", ep.converged)
