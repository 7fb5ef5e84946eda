"""Reference online learners: ADF, sliding-window EP, batch EP and passive-aggressive.

Every learner trains on signed, bias-augmented vectors from
``features.prepare_stream_record`` and predicts on unsigned ones.
"""

from __future__ import annotations

import math

import numpy as np

from . import gaussian as gs
from .ep import EpConfig, adf_step, predict, run_ep
from .gaussian import MomentGaussian, NaturalGaussian, SiteFactor
from .likelihood import StepLikelihood


class AdfLearner:
    """Sequential assumed-density filtering from N(0, I)."""

    def __init__(self, dim, epsilon=0.01):
        self.lik = StepLikelihood(epsilon)
        self.state = MomentGaussian.standard(dim)

    @property
    def surrogate(self):
        return self.state

    def update(self, x):
        self.state = adf_step(self.state, x, self.lik)
        return self

    def predict(self, features):
        return predict(self.state, features, self.lik)


class WindowEpState:
    """EP over the most recent ``window`` points; older sites are frozen into the residual.

    ``window=None`` keeps every point, which is batch EP rerun after each
    arrival.
    """

    def __init__(self, dim, window, epsilon=0.01, ep=EpConfig()):
        if window is not None and window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self.lik = StepLikelihood(epsilon)
        self.ep = ep
        self.residual = NaturalGaussian.standard(dim)
        self.points = []
        self.taus = []
        self.nus = []
        self.surrogate = MomentGaussian.standard(dim)
        self.converged = True

    def update(self, x):
        return window_ep_step(self, x)

    def predict(self, features):
        return predict(self.surrogate, features, self.lik)


def window_ep_step(state, x):
    """Append x, freeze the oldest site into the residual if over capacity, rerun EP."""
    x = np.asarray(x, dtype=float)
    state.points.append(x)
    state.taus.append(0.0)
    state.nus.append(0.0)
    if state.window is not None and len(state.points) > state.window:
        site = SiteFactor(state.points.pop(0), state.taus.pop(0), state.nus.pop(0))
        state.residual = gs.multiply_site(state.residual, site, +1)
    result = run_ep(state.residual, np.array(state.points), state.lik, state.ep,
                    warm_start=list(zip(state.taus, state.nus)))
    state.taus = [s.precision_1d for s in result.sites]
    state.nus = [s.shift_1d for s in result.sites]
    state.surrogate = result.surrogate
    state.converged = result.converged
    return state


def ep_batch(points, epsilon=0.01, ep=EpConfig(max_sweeps=50)):
    """Batch EP over all points with prior N(0, I)."""
    points = np.asarray(points, dtype=float)
    return run_ep(NaturalGaussian.standard(points.shape[1]), points, StepLikelihood(epsilon), ep)


class PaState:
    """PA-I passive-aggressive learner on the hinge loss."""

    def __init__(self, dim, aggressiveness=2.0):
        if not aggressiveness > 0:
            raise ValueError("aggressiveness must be positive")
        self.weights = np.zeros(dim)
        self.aggressiveness = aggressiveness

    @property
    def mean(self):
        return self.weights

    def update(self, x):
        return pa_step(self, x)

    def predict(self, features):
        score = float(self.weights @ features)
        return (1 if score >= 0 else -1), math.nan


def pa_step(state, x):
    x = np.asarray(x, dtype=float)
    sq = float(x @ x)
    if sq == 0.0:
        raise ValueError("cannot update on a zero vector")
    loss = max(0.0, 1.0 - float(state.weights @ x))
    if loss > 0.0:
        state.weights = state.weights + min(state.aggressiveness, loss / sq) * x
    return state
