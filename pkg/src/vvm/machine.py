"""The Virtual Vector Machine: a Gaussian residual times a bounded cache of exact factors.

The learner holds at most ``capacity`` virtual points. When a point
arrives at a full cache, the cache is first reduced by one point, using
the EP solution already computed for it: either a point is evicted (its
Gaussian site is absorbed into the residual) or the closest pair is
merged into its midpoint plus a Gaussian correction found by inverse
ADF. The change with the largest non-Gaussianity score wins. The new
point is then added and EP is rerun with the previous sites as a warm
start.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import gaussian as gs
from .ep import EpConfig, EpResult, predict, run_ep, site_diagnostics, total_natural
from .gaussian import MomentGaussian, NaturalGaussian, NotPositiveDefinite, SiteFactor
from .inverse_adf import NoValidRoot, RootNotFound, inverse_adf_gaussian
from .likelihood import StepLikelihood, adf_moments, margin, site_divergence, site_from_tilt
from .pairwise import bivariate_tilt_moments

SNAPSHOT_VERSION = "vvm-snapshot/1"
TIE_TOL = 1e-12


class MergeInfeasible(RuntimeError):
    pass


class ScoreMode(str, Enum):
    FULL_KL = "full_kl"
    MARGIN_ONLY = "margin_only"


@dataclass(frozen=True)
class VvmConfig:
    """Learner settings.

    ``capacity`` is the largest number of virtual points ever held,
    counting the newest arrival; capacity 1 is plain ADF.
    """

    capacity: int
    k_pairs: int = 1
    score_mode: ScoreMode = ScoreMode.FULL_KL
    epsilon: float = 0.01
    ep: EpConfig = EpConfig()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if self.k_pairs < 1 or self.k_pairs > self.capacity * (self.capacity + 1) // 2:
            raise ValueError(f"k_pairs must lie in [1, capacity (capacity + 1) / 2], got {self.k_pairs}")
        object.__setattr__(self, "score_mode", ScoreMode(self.score_mode))
        StepLikelihood(self.epsilon)


class VirtualPointSet:
    """Ordered cache of virtual points with aligned sites and divergences."""

    def __init__(self, dim):
        self.dim = dim
        self.points = []
        self.taus = []
        self.nus = []
        self.divergences = []

    def __len__(self):
        return len(self.points)

    def append(self, b, tau=0.0, nu=0.0, divergence=0.0):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {b.shape}")
        self.points.append(b)
        self.taus.append(float(tau))
        self.nus.append(float(nu))
        self.divergences.append(float(divergence))

    def remove(self, idx):
        for seq in (self.points, self.taus, self.nus, self.divergences):
            del seq[idx]

    def site(self, idx):
        return SiteFactor(self.points[idx], self.taus[idx], self.nus[idx])

    @property
    def sites(self):
        return [self.site(i) for i in range(len(self))]

    def matrix(self):
        if not self.points:
            return np.zeros((0, self.dim))
        return np.vstack(self.points)


@dataclass(frozen=True)
class Decision:
    step: int
    kind: str  # "evict" or "merge"
    indices: tuple
    score: float


@dataclass
class MergeProposal:
    pair: tuple
    b_prime: np.ndarray
    g: NaturalGaussian
    new_site: SiteFactor
    new_divergence: float
    score: float
    residual: NaturalGaussian = field(repr=False, default=None)
    surrogate: MomentGaussian = field(repr=False, default=None)


class VvmState:
    """Residual, virtual point cache and the current EP surrogate."""

    def __init__(self, dim, config):
        self.config = config
        self.lik = StepLikelihood(config.epsilon)
        self.residual = NaturalGaussian.standard(dim)
        self.cache = VirtualPointSet(dim)
        self.surrogate = MomentGaussian.standard(dim)
        self.converged = True
        self.points_seen = 0
        self.decisions = []
        self.merge_failures = 0

    @property
    def dim(self):
        return self.cache.dim

    @property
    def total_natural(self):
        return total_natural(self.residual, self.cache.matrix(), self.cache.taus, self.cache.nus)

    @property
    def divergence_total(self):
        return float(np.nansum(self.cache.divergences))

    def decision_counts(self):
        counts = {"evict": 0, "merge": 0}
        for d in self.decisions:
            counts[d.kind] += 1
        counts["merge_failed"] = self.merge_failures
        return counts

    def predict(self, features):
        return predict(self.surrogate, features, self.lik)

    def update(self, x):
        return process_point(self, x)

    def _store_ep(self, result):
        self.cache.taus = [s.precision_1d for s in result.sites]
        self.cache.nus = [s.shift_1d for s in result.sites]
        self.cache.divergences = list(result.divergences)
        self.surrogate = result.surrogate
        self.converged = result.converged


def run_cache_ep(state):
    result = run_ep(state.residual, state.cache.matrix(), state.lik, state.config.ep,
                    warm_start=list(zip(state.cache.taus, state.cache.nus)))
    state._store_ep(result)
    return result


def process_point(state, x):
    """Absorb one signed, bias-augmented example into the learner (mutates ``state``)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (state.dim,):
        raise ValueError(f"expected a vector of length {state.dim}, got shape {x.shape}")
    if not np.any(x):
        raise ValueError("cannot add a zero vector")
    if len(state.cache) >= state.config.capacity:
        reduce_cache(state)
    state.cache.append(x)
    run_cache_ep(state)
    state.points_seen += 1
    return state


def _divergence(state, j):
    d = state.cache.divergences[j]
    return 0.0 if math.isnan(d) else d


def score_eviction(state, j):
    """Score of evicting point j; higher is better.

    In full_kl mode this is E - D_j: the divergences of the other points
    stay the same because the EP solution is a fixed point after the
    eviction. In margin_only mode it is |R(b_j)|.
    """
    if state.config.score_mode is ScoreMode.MARGIN_ONLY:
        return abs(margin(state.surrogate, state.cache.points[j]))
    return state.divergence_total - _divergence(state, j)


def can_evict(state, j):
    """Whether absorbing site j keeps the residual a proper (positive definite) Gaussian.

    Only a negative site precision can break this. An improper residual
    leaves q~ unchanged at the moment of eviction, but later EP runs on
    top of it diverge.
    """
    tau = state.cache.taus[j]
    if tau >= 0:
        return True
    return gs.is_positive_definite(gs.multiply_site(state.residual, state.cache.site(j), +1).precision)


def apply_eviction(state, j):
    """Remove point j and multiply its site into the residual."""
    site = state.cache.site(j)
    state.residual = gs.multiply_site(state.residual, site, +1)
    state.cache.remove(j)
    state.surrogate = gs.to_moments(state.total_natural)
    return state


def find_merge_candidates(cache, k_pairs):
    """The k closest pairs (i < j) by distance between unit-normalized points."""
    pts = cache.matrix()
    if len(pts) < 2:
        return []
    unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    i_idx, j_idx = np.triu_indices(len(pts), k=1)
    dist = np.linalg.norm(unit[i_idx] - unit[j_idx], axis=1)
    order = np.lexsort((j_idx, i_idx, dist))[:k_pairs]
    return [(int(i_idx[o]), int(j_idx[o])) for o in order]


def _pair_cavity(state, pair):
    i, j = pair
    nat = gs.multiply_site(state.total_natural, state.cache.site(i), -1)
    return gs.multiply_site(nat, state.cache.site(j), -1)


def proposal_from_parts(state, pair, b_prime, g):
    """Score replacing points ``pair`` by ``b_prime`` with residual correction ``g``.

    The site for ``b_prime`` is one EP projection against the corrected
    residual times the remaining sites.
    """
    i, j = pair
    keep = [k for k in range(len(state.cache)) if k not in pair]
    residual = state.residual * g
    if not gs.is_positive_definite(residual.precision):
        # the residual must stay a proper Gaussian for later evictions and cavities
        raise MergeInfeasible(f"pair {pair}: corrected residual is not positive definite")
    pts = state.cache.matrix()[keep]
    taus = [state.cache.taus[k] for k in keep]
    nus = [state.cache.nus[k] for k in keep]
    try:
        cavity = gs.to_moments(total_natural(residual, pts, taus, nus))
        m_c, v_c = gs.marginal_1d(cavity, b_prime)
        tilt = adf_moments(state.lik, m_c, v_c)
        tau, nu = site_from_tilt(m_c, v_c, tilt)
        new_site = SiteFactor(np.asarray(b_prime, dtype=float), tau, nu)
        surrogate = gs.to_moments(gs.multiply_site(cavity.to_natural(), new_site, +1))
    except (NotPositiveDefinite, gs.DegenerateDirection) as exc:
        raise MergeInfeasible(str(exc)) from exc
    m_p, v_p = gs.marginal_1d(surrogate, b_prime)
    new_div = site_divergence(state.lik, (m_c, v_c), (m_p, v_p), tilt.log_Z)
    score = state.divergence_total - _divergence(state, i) - _divergence(state, j) + new_div
    return MergeProposal(pair, np.asarray(b_prime, dtype=float), g, new_site, new_div, score,
                         residual, surrogate)


def propose_merge(state, pair):
    """Build the merge of ``pair`` into its midpoint.

    The two exact factors times their cavity give target moments; inverse
    ADF along the midpoint finds the Gaussian prior that reproduces them,
    and the residual correction is that prior divided by the cavity.
    Raises MergeInfeasible when no valid correction exists.
    """
    i, j = pair
    b1, b2 = state.cache.points[i], state.cache.points[j]
    cavity_nat = _pair_cavity(state, pair)
    try:
        cavity = gs.to_moments(cavity_nat)
        _, mean, cov = bivariate_tilt_moments(cavity, b1, b2, state.lik)
        b_prime = 0.5 * (b1 + b2)
        prior, _ = inverse_adf_gaussian(state.lik, MomentGaussian(mean, cov), b_prime)
        g = gs.to_natural(prior) / cavity_nat
    except (NotPositiveDefinite, NoValidRoot, RootNotFound, gs.DegenerateDirection, ValueError) as exc:
        raise MergeInfeasible(f"pair {pair}: {exc}") from exc
    return proposal_from_parts(state, pair, b_prime, g)


def apply_merge(state, proposal):
    i, j = proposal.pair
    state.residual = proposal.residual
    for idx in sorted(proposal.pair, reverse=True):
        state.cache.remove(idx)
    site = proposal.new_site
    state.cache.append(site.direction, site.precision_1d, site.shift_1d, proposal.new_divergence)
    state.surrogate = proposal.surrogate
    return state


def reduce_cache(state):
    """Drop one virtual point by the best-scoring eviction or merge."""
    n = len(state.cache)
    step = state.points_seen
    evict_scores = [score_eviction(state, j) for j in range(n)]
    feasible = [j for j in range(n) if can_evict(state, j)]
    if feasible:
        best_j = max(feasible, key=lambda j: (evict_scores[j], -j))
    else:
        best_j = int(np.argmax(evict_scores))
    best = Decision(step, "evict", (best_j,), evict_scores[best_j])
    chosen = None
    # merge scores compare divergences that are only meaningful at an EP fixed point
    if state.config.score_mode is ScoreMode.FULL_KL and state.converged:
        for pair in find_merge_candidates(state.cache, state.config.k_pairs):
            try:
                proposal = propose_merge(state, pair)
            except MergeInfeasible:
                state.merge_failures += 1
                continue
            if proposal.score > best.score + TIE_TOL:
                best = Decision(step, "merge", pair, proposal.score)
                chosen = proposal
    if chosen is None:
        apply_eviction(state, best_j)
    else:
        apply_merge(state, chosen)
    state.decisions.append(best)
    return best


class VirtualVectorMachine(VvmState):
    """Online learner; ``update`` trains on a signed example, ``predict`` labels raw features."""

    def __init__(self, dim, capacity, k_pairs=1, score_mode="full_kl", epsilon=0.01, ep=EpConfig()):
        super().__init__(dim, VvmConfig(capacity, k_pairs, ScoreMode(score_mode), epsilon, ep))


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def export_snapshot(state):
    """Flat JSON-serializable record of the learner. Floats round-trip exactly."""
    residual_moments = None
    try:
        r = gs.to_moments(state.residual)
        residual_moments = {"mean": _floats(r.mean), "covariance": _floats(r.covariance)}
    except NotPositiveDefinite:
        pass
    cfg = state.config
    return {
        "version": SNAPSHOT_VERSION,
        "dim": state.dim,
        "epsilon": cfg.epsilon,
        "capacity": cfg.capacity,
        "k_pairs": cfg.k_pairs,
        "score_mode": cfg.score_mode.value,
        "ep": {"max_sweeps": cfg.ep.max_sweeps, "damping": cfg.ep.damping,
               "convergence_tol": cfg.ep.convergence_tol,
               "min_cavity_variance": cfg.ep.min_cavity_variance},
        "points_seen": state.points_seen,
        "residual": {"precision": _floats(state.residual.precision),
                     "shift": _floats(state.residual.shift),
                     "moments": residual_moments},
        "cache": {"points": [_floats(b) for b in state.cache.points],
                  "tau": list(state.cache.taus), "nu": list(state.cache.nus)},
    }


def import_snapshot(record):
    if record.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {record.get('version')!r}")
    cfg = VvmConfig(record["capacity"], record["k_pairs"], ScoreMode(record["score_mode"]),
                    record["epsilon"], EpConfig(**record["ep"]))
    state = VvmState(record["dim"], cfg)
    state.points_seen = record["points_seen"]
    state.residual = NaturalGaussian(np.array(record["residual"]["precision"]),
                                     np.array(record["residual"]["shift"]))
    for b, tau, nu in zip(record["cache"]["points"], record["cache"]["tau"], record["cache"]["nu"]):
        state.cache.append(b, tau, nu)
    state.surrogate = gs.to_moments(state.total_natural)
    _, _, divs = site_diagnostics(state.surrogate, state.cache.matrix(), state.cache.taus,
                                  state.cache.nus, state.lik)
    state.cache.divergences = divs
    return state


def save_snapshot(state, path):
    with open(path, "w") as fh:
        json.dump(export_snapshot(state), fh)


def load_snapshot(path):
    with open(path) as fh:
        return import_snapshot(json.load(fh))
