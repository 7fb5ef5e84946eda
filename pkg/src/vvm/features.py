"""Random Fourier features for the RBF kernel and stream-record preparation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RffMap:
    """Random Fourier map for k(x - y) = exp(-|x - y|^2 / (2 sigma)).

    Note the kernel width enters as sigma, not sigma^2: the spectral
    density is N(0, I / sigma). Frequencies are regenerated from the seed.
    """

    input_dim: int
    dim: int = 100
    sigma: float = 1.0
    seed: int = 0
    frequencies: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1 or self.input_dim < 1:
            raise ValueError("dimensions must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        rng = np.random.default_rng(self.seed)
        omega = rng.standard_normal((self.dim, self.input_dim)) / math.sqrt(self.sigma)
        omega.setflags(write=False)
        object.__setattr__(self, "frequencies", omega)

    @property
    def output_dim(self):
        return 2 * self.dim

    def kernel(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return math.exp(-float(d @ d) / (2.0 * self.sigma))

    def __call__(self, x):
        return expand(self, x)


def expand(rff, x):
    """(1/sqrt(D)) [cos(omega x); sin(omega x)], so that z(x).z(y) estimates k(x - y)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != rff.input_dim:
        raise ValueError(f"expected {rff.input_dim} input features, got {x.shape[-1]}")
    proj = x @ rff.frequencies.T
    return np.concatenate([np.cos(proj), np.sin(proj)], axis=-1) / math.sqrt(rff.dim)


def featurize(raw, rff=None):
    """phi(raw) with a trailing bias constant 1; phi is the identity without a map."""
    raw = np.asarray(raw, dtype=float)
    phi = raw if rff is None else expand(rff, raw)
    return np.append(phi, 1.0)


def prepare_stream_record(raw, label, rff=None):
    """Signed training vector label * [phi(raw); 1] for a label in {-1, +1}."""
    if label not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {label!r}")
    return label * featurize(raw, rff)
