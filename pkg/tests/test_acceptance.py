"""Acceptance checks, one test per criterion.

Each test records a ``criterion N: PASS|FAIL ...`` line, printed in the
terminal summary, before asserting.
"""

import copy
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_spd
from vvm import gaussian as gs
from vvm.baselines import ep_batch
from vvm.ep import EpConfig, adf_step
from vvm.features import RffMap, prepare_stream_record
from vvm.gaussian import MomentGaussian
from vvm.harness import (
    ExperimentConfig,
    Fig1Config,
    MixtureSpec,
    fig1_study,
    load_csv,
    make_fig1_data,
    make_learner,
    run_stream,
)
from vvm.inverse_adf import inverse_adf
from vvm.likelihood import StepLikelihood, adf_moments, divergence_terms, site_divergence
from vvm.machine import VirtualVectorMachine, reduce_cache, run_cache_ep
from vvm.oracle import kl_tilted_quadrature, tilt_moments_quadrature_2d
from vvm.pairwise import bivariate_tilt_moments, quadrant_levels

EPSILONS = [0.0, 0.01, 0.1, 0.4]


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def test_criterion_01_inverse_adf_roundtrip():
    rng = np.random.default_rng(1)
    cases = [(EPSILONS[rng.integers(4)], math.exp(rng.uniform(math.log(0.01), math.log(100))),
              math.exp(rng.uniform(math.log(0.01), math.log(100)))) for _ in range(1000)]
    start = time.perf_counter()
    worst = 0.0
    for eps, m, v in cases:
        lik = StepLikelihood(eps)
        t = adf_moments(lik, m, v)
        m_h, v_h, _ = inverse_adf(lik, t.m_new, t.v_new)
        worst = max(worst, abs(m_h - m) / m, abs(v_h - v) / v)
    elapsed = time.perf_counter() - start
    ok = record(1, worst < 1e-6 and elapsed < 1.0,
                f"inverse ADF: max rel error {worst:.2e} (< 1e-6), {elapsed:.3f} s (< 1 s)")
    assert ok


def test_criterion_02_divergence_formula():
    worst = 0.0
    for eps in EPSILONS:
        lik = StepLikelihood(eps)
        for m in np.linspace(-3.0, 3.0, 20):
            for v in np.geomspace(0.1, 10.0, 20):
                t = adf_moments(lik, m, v)
                d = site_divergence(lik, (m, v), (t.m_new, t.v_new), t.log_Z)
                worst = max(worst, abs(d - kl_tilted_quadrature(m, v, lik, (t.m_new, t.v_new))))
    mags = [abs(divergence_terms(StepLikelihood(e), (0.3, 1.0), (0.8, 0.5)).e_minus
                + divergence_terms(StepLikelihood(e), (0.3, 1.0), (0.8, 0.5)).e_plus)
            for e in (1e-2, 1e-4, 1e-6)]
    monotone = mags[0] > mags[1] > mags[2]
    ok = record(2, worst < 1e-6 and monotone,
                f"divergence: max abs error vs quadrature {worst:.2e} (< 1e-6); "
                f"noise terms at eps 1e-2/1e-4/1e-6 = {mags[0]:.1e}/{mags[1]:.1e}/{mags[2]:.1e}")
    assert ok


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def test_criterion_03_bivariate_moments():
    rng = np.random.default_rng(3)
    worst, narrow = 0.0, 0
    for k in range(100):
        eps = EPSILONS[k % 4]
        cav = MomentGaussian(rng.normal(size=4), random_spd(rng, 4))
        b1 = rng.normal(size=4)
        if k % 3 == 0:
            perp = rng.normal(size=4)
            perp -= (perp @ b1) / (b1 @ b1) * b1
            perp *= np.linalg.norm(b1) / np.linalg.norm(perp)
            angle = math.radians(rng.uniform(0.01, 5.0))
            b2 = math.cos(angle) * b1 + math.sin(angle) * perp
            narrow += 1
        else:
            b2 = rng.normal(size=4)
        B = np.column_stack([b1, b2])
        z, mean, cov = bivariate_tilt_moments(cav, b1, b2, StepLikelihood(eps))
        zq, mq, cq = tilt_moments_quadrature_2d(B.T @ cav.mean, B.T @ cav.covariance @ B,
                                                quadrant_levels(eps))
        worst = max(worst, _rel(z, zq), _rel(B.T @ mean, mq), _rel(B.T @ cov @ B, cq))

    lik = StepLikelihood(0.05)
    cav = MomentGaussian(np.array([0.4, -0.7, 0.2]), np.eye(3))
    z, mean, cov = bivariate_tilt_moments(cav, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), lik)
    t1, t2 = adf_moments(lik, 0.4, 1.0), adf_moments(lik, -0.7, 1.0)
    fact = max(_rel(z, math.exp(t1.log_Z + t2.log_Z)),
               _rel(mean, [t1.m_new, t2.m_new, 0.2]),
               _rel(cov, np.diag([t1.v_new, t2.v_new, 1.0])))
    ok = record(3, worst < 1e-4 and fact < 1e-10,
                f"pairwise moments: max rel error {worst:.2e} over 100 instances "
                f"({narrow} under 5 degrees) (< 1e-4); factorized case {fact:.1e} (< 1e-10)")
    assert ok


def _mixture_stream(seed, n_per_class):
    raw, y = make_fig1_data(np.random.default_rng(seed), MixtureSpec(n_per_class=n_per_class))
    return np.array([prepare_stream_record(r, int(t)) for r, t in zip(raw, y)])


def _site_move(state):
    """Largest site change when EP is rerun on a copy of ``state``."""
    probe = copy.deepcopy(state)
    old = np.array([probe.cache.taus, probe.cache.nus])
    run_cache_ep(probe)
    return float(np.max(np.abs(np.array([probe.cache.taus, probe.cache.nus]) - old))), probe


def test_criterion_04_conservation():
    ep = EpConfig(max_sweeps=50)
    vvm = VirtualVectorMachine(3, 20, k_pairs=3, ep=ep)
    site_moves, control_moves, merge_moves = [], [], []
    for x in _mixture_stream(4, 1000):
        if len(vvm.cache) >= vvm.config.capacity:
            # the same rerun without any reduction shows the numerical floor of the fixed point
            control_moves.append(_site_move(vvm)[0])
            before = vvm.surrogate
            decision = reduce_cache(vvm)
            move, probe = _site_move(vvm)
            if decision.kind == "evict":
                site_moves.append(move)
            else:
                merge_moves.append(max(_rel(probe.surrogate.mean, before.mean),
                                       _rel(probe.surrogate.covariance, before.covariance)))
        vvm.cache.append(x)
        run_cache_ep(vvm)
        vvm.points_seen += 1
    evict_ok = max(site_moves) <= ep.convergence_tol
    merge_ok = bool(merge_moves) and max(merge_moves) < 1e-6
    ok = record(4, evict_ok and merge_ok,
                f"conservation: {len(site_moves)} evictions, max site change after rerun "
                f"{max(site_moves):.1e} (tol {ep.convergence_tol:g}; plain rerun without reduction "
                f"{max(control_moves):.1e}); {len(merge_moves)} merges, max rel surrogate change "
                f"{max(merge_moves, default=float('nan')):.1e} (< 1e-6)")
    assert ok


def test_criterion_05_reductions():
    x = _mixture_stream(5, 75)
    lik = StepLikelihood(0.01)
    one = VirtualVectorMachine(3, 1)
    q = MomentGaussian.standard(3)
    adf_gap = 0.0
    for p in x:
        one.update(p)
        q = adf_step(q, p, lik)
        adf_gap = max(adf_gap, _rel(one.surrogate.mean, q.mean), _rel(one.surrogate.covariance, q.covariance))
    tight = EpConfig(max_sweeps=200, convergence_tol=1e-11)
    full = VirtualVectorMachine(3, len(x), ep=tight)
    for p in x:
        full.update(p)
    batch = ep_batch(x, 0.01, tight).surrogate
    ep_gap = max(_rel(full.surrogate.mean, batch.mean), _rel(full.surrogate.covariance, batch.covariance))
    ok = record(5, adf_gap < 1e-6 and ep_gap < 1e-6,
                f"reductions: capacity 1 vs ADF {adf_gap:.1e}, capacity N vs batch EP {ep_gap:.1e} (< 1e-6)")
    assert ok


def test_criterion_06_fig1_ordering():
    start = time.perf_counter()
    out = fig1_study(Fig1Config(runs=20, buffers=(10, 40), n_samples=200_000))
    mse = out["mse"]
    elapsed = time.perf_counter() - start
    checks = {
        "EP < VVM(40)": mse["ep"] < mse["vvm_40"],
        "VVM(10) < WEP(10)": mse["vvm_10"] < mse["window_ep_10"],
        "VVM(40) < WEP(40)": mse["vvm_40"] < mse["window_ep_40"],
        "ADF largest": mse["adf"] > max(v for k, v in mse.items() if k != "adf"),
    }
    table = ", ".join(f"{k} {v:.2e}" for k, v in sorted(mse.items()))
    failed = [k for k, v in checks.items() if not v]
    ok = record(6, not failed and elapsed < 600,
                f"synthetic MSE ordering {'holds' if not failed else 'violated: ' + '; '.join(failed)} "
                f"[{table}] in {elapsed:.0f} s")
    assert ok


THYROID = os.environ.get("VVM_THYROID_CSV")


@pytest.mark.skipif(THYROID is None, reason="set VVM_THYROID_CSV to a Thyroid CSV to run")
def test_criterion_07_thyroid_trend():
    data = load_csv(THYROID)
    buffers = (10, 20, 30, 50)
    paper = {("vvm", 10): (7.86, 1.03), ("window_ep", 10): (8.20, 1.01)}
    means = {}
    for algo in ("vvm", "window_ep"):
        for b in buffers:
            cfg = ExperimentConfig(algorithm=algo, buffer_size=b, rff_dim=100, rff_sigma=1.0,
                                   permutations=10, standardize=True)
            means[algo, b] = 100 * float(run_stream(cfg, data).final_errors.mean())
    monotone = all(means[a, b2] <= means[a, b1] + 0.5 for a in ("vvm", "window_ep")
                   for b1, b2 in zip(buffers, buffers[1:]))
    order = means["vvm", 10] <= means["window_ep", 10]
    overlap = all(abs(means[k] - m) <= 3 * s for k, (m, s) in paper.items())
    ok = record(7, monotone and order and overlap,
                "thyroid: " + ", ".join(f"{a}({b}) {means[a, b]:.2f}%" for a, b in sorted(means)))
    assert ok


def test_criterion_07_recorded_when_skipped():
    if THYROID is None:
        ACCEPTANCE_LINES.append("criterion  7: SKIP  no Thyroid CSV supplied (set VVM_THYROID_CSV)")


def test_criterion_08_rff_quality():
    rng = np.random.default_rng(8)
    x = rng.uniform(-2, 2, size=(1000, 3))
    direction = rng.standard_normal((1000, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    y = x + direction * rng.uniform(0, 3, size=(1000, 1))
    errs = {}
    norms = 0.0
    for dim in (100, 400):
        rff = RffMap(3, dim=dim, sigma=1.0, seed=8)
        zx, zy = rff(x), rff(y)
        norms = max(norms, float(np.max(np.abs(np.sum(zx * zx, axis=1) - 1.0))))
        exact = np.exp(-np.sum((x - y) ** 2, axis=1) / 2.0)
        errs[dim] = float(np.mean(np.abs(np.sum(zx * zy, axis=1) - exact)))
    ok = record(8, norms < 1e-12 and errs[100] < 0.06 and errs[400] < errs[100],
                f"random features: |z.z - 1| {norms:.1e}, kernel error D=100 {errs[100]:.4f} (< 0.06), "
                f"D=400 {errs[400]:.4f}")
    assert ok


def test_criterion_09_streaming_soundness():
    rng = np.random.default_rng(9)
    x = rng.uniform(-1, 1, size=(4000, 2))
    # separable with a margin: perceptron-style mistake bounds scale with 1 / margin^2
    dist = (x @ [1.0, -0.5] + 0.1) / math.hypot(1.0, 0.5)
    x, dist = x[np.abs(dist) >= 0.1][:400], dist[np.abs(dist) >= 0.1][:400]
    y = np.where(dist > 0, 1, -1)
    prepared = [prepare_stream_record(r, int(t)) for r, t in zip(x, y)]
    errors = {}
    identical = True
    for algo, buf in (("adf", None), ("window_ep", 10), ("pa", None), ("vvm", 10)):
        cfg = ExperimentConfig(algorithm=algo, buffer_size=buf)
        learner = make_learner(cfg, 3)
        seen = []
        original = learner.update

        def spy(v, original=original, seen=seen):
            seen.append(np.asarray(v).tobytes())
            return original(v)

        learner.update = spy
        mistakes = 0
        for t, (raw, label) in enumerate(zip(x, y), start=1):
            pred, _ = learner.predict(np.append(raw, 1.0))
            mistakes += pred != label
            learner.update(prepare_stream_record(raw, int(label)))
            if t == 200:
                errors[algo] = mistakes / 200
        identical &= seen == [p.tobytes() for p in prepared]
    ok = record(9, identical and all(e < 0.05 for e in errors.values()),
                "streaming: error at step 200 " + ", ".join(f"{k} {v:.3f}" for k, v in errors.items())
                + f" (< 0.05); identical inputs {identical}")
    assert ok


def test_criterion_10_determinism():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(200, 2))
    y = np.where(x[:, 0] * x[:, 1] > 0, 1, -1)
    same = True
    for cfg in (ExperimentConfig(algorithm="vvm", buffer_size=8, k_pairs=3, rff_dim=20, rff_sigma=1.0,
                                 permutations=3, seed=4),
                ExperimentConfig(algorithm="window_ep", buffer_size=8, permutations=3, seed=4),
                ExperimentConfig(algorithm="pa", permutations=3, seed=4)):
        a, b = run_stream(cfg, (x, y)), run_stream(cfg, (x, y))
        sa, sb = a.summary(), b.summary()
        sa.pop("wall_time"), sb.pop("wall_time")
        same &= (a.errors.tobytes() == b.errors.tobytes() and a.decision_logs == b.decision_logs
                 and sa == sb)
    ok = record(10, same, "determinism: repeated runs give bit-identical reports and decision logs")
    assert ok
