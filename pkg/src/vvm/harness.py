"""Streaming experiments: CSV ingestion, progressive validation and the synthetic posterior-mean study."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import AdfLearner, PaState, WindowEpState, ep_batch
from .ep import EpConfig, adf_step
from .features import RffMap, featurize, prepare_stream_record
from .gaussian import MomentGaussian
from .likelihood import StepLikelihood
from .machine import ScoreMode, VirtualVectorMachine, save_snapshot
from .oracle import SamplerConfig, posterior_mean_mc

ALGORITHMS = ("vvm", "adf", "window_ep", "pa", "ep_batch")
BUFFERED = ("vvm", "window_ep")


class ParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigError(ValueError):
    pass


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def parse_csv(text):
    """Features and +/-1 labels from CSV text; the last column is the label.

    A first row with any non-numeric cell is treated as a header. Labels
    may be {-1, +1} or {0, 1}; 0 maps to -1.
    """
    rows = []
    width = None
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        cells = [c.strip() for c in row]
        if not rows and width is None and not all(_is_number(c) for c in cells):
            width = len(cells)
            continue
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", line_no)
        if width < 2:
            raise ParseError("need at least one feature column and a label column", line_no)
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(f"non-numeric value ({exc})", line_no) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", line_no)
        label = values[-1]
        if label not in (-1.0, 0.0, 1.0):
            raise ParseError(f"label must be -1, 0 or 1, got {cells[-1]!r}", line_no)
        rows.append((values[:-1], -1 if label <= 0 else 1))
    if not rows:
        raise ParseError("no data rows")
    features = np.array([r[0] for r in rows], dtype=float)
    labels = np.array([r[1] for r in rows], dtype=int)
    return features, labels


def load_csv(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_csv(text)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str | None = None
    algorithm: str = "vvm"
    buffer_size: int | None = None
    epsilon: float = 0.01
    k_pairs: int = 1
    score_mode: str = "full_kl"
    rff_dim: int | None = None
    rff_sigma: float | None = None
    permutations: int = 10
    seed: int = 0
    output_path: str | None = None
    standardize: bool = False
    holdout: float = 0.0
    pa_aggressiveness: float = 2.0
    ep_sweeps: int = 5
    ep_damping: float = 1.0
    snapshot_path: str | None = None

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.algorithm in BUFFERED and (self.buffer_size is None or self.buffer_size < 1):
            raise ConfigError(f"{self.algorithm} needs a positive buffer_size")
        if not 0.0 <= self.epsilon < 0.5:
            raise ConfigError("epsilon must lie in [0, 0.5)")
        if self.k_pairs < 1:
            raise ConfigError("k_pairs must be positive")
        if self.score_mode not in {m.value for m in ScoreMode}:
            raise ConfigError(f"unknown score mode {self.score_mode!r}")
        if (self.rff_dim is None) != (self.rff_sigma is None):
            raise ConfigError("random features need both rff_dim and rff_sigma")
        if self.rff_dim is not None and (self.rff_dim < 1 or not self.rff_sigma > 0):
            raise ConfigError("rff_dim and rff_sigma must be positive")
        if self.ep_sweeps < 1 or not 0.0 < self.ep_damping <= 1.0:
            raise ConfigError("ep_sweeps must be positive and ep_damping must lie in (0, 1]")
        if self.permutations < 1:
            raise ConfigError("permutations must be positive")
        if not 0.0 <= self.holdout < 1.0:
            raise ConfigError("holdout must lie in [0, 1)")
        if self.snapshot_path is not None and self.algorithm != "vvm":
            raise ConfigError("snapshots are only available for the vvm learner")
        return self


def make_learner(config, dim):
    ep = EpConfig(max_sweeps=config.ep_sweeps, damping=config.ep_damping)
    if config.algorithm == "vvm":
        return VirtualVectorMachine(dim, config.buffer_size, config.k_pairs, config.score_mode,
                                    config.epsilon, ep)
    if config.algorithm == "adf":
        return AdfLearner(dim, config.epsilon)
    if config.algorithm == "window_ep":
        return WindowEpState(dim, config.buffer_size, config.epsilon, ep)
    if config.algorithm == "ep_batch":
        return WindowEpState(dim, None, config.epsilon, ep)
    return PaState(dim, config.pa_aggressiveness)


class RunningScaler:
    """Per-feature z-score with statistics from the points seen so far."""

    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def transform(self, x):
        if self.n < 2:
            return x - self.mean if self.n else x.copy()
        sd = np.sqrt(self.m2 / (self.n - 1))
        return (x - self.mean) / np.where(sd > 0, sd, 1.0)

    def observe(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)


@dataclass
class RunReport:
    config: ExperimentConfig
    errors: np.ndarray
    decision_counts: dict
    decision_logs: list
    holdout_errors: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def mean_error(self):
        return self.errors.mean(axis=0)

    @property
    def final_errors(self):
        return self.errors[:, -1]

    def summary(self):
        finals = self.final_errors
        out = {
            "config": asdict(self.config),
            "final_error_mean": float(finals.mean()),
            "final_error_sd": float(finals.std(ddof=1)) if len(finals) > 1 else 0.0,
            "final_errors": [float(e) for e in finals],
            "decision_counts": self.decision_counts,
            "wall_time": self.wall_time,
        }
        if self.holdout_errors:
            out["holdout_error_mean"] = float(np.mean(self.holdout_errors))
            out["holdout_errors"] = [float(e) for e in self.holdout_errors]
        return out

    def write(self, path):
        """Write the error series CSV to ``path`` and the summary JSON next to it."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "mean_error"] + [f"perm_{p}" for p in range(len(self.errors))])
            for t in range(self.errors.shape[1]):
                writer.writerow([t + 1, repr(float(self.mean_error[t]))]
                                + [repr(float(e)) for e in self.errors[:, t]])
        summary_path = path.with_suffix(".summary.json")
        summary_path.write_text(json.dumps(self.summary(), indent=2))
        return path, summary_path


def _stream_once(config, features, labels, order, rff):
    n_train = len(order) - int(round(config.holdout * len(order)))
    train, test = order[:n_train], order[n_train:]
    raw_dim = features.shape[1]
    dim = (rff.output_dim if rff is not None else raw_dim) + 1
    learner = make_learner(config, dim)
    scaler = RunningScaler(raw_dim) if config.standardize else None
    mistakes = 0
    errors = np.empty(len(train))
    for t, idx in enumerate(train):
        raw = features[idx]
        if scaler is not None:
            x_raw = scaler.transform(raw)
            scaler.observe(raw)
        else:
            x_raw = raw
        label, _ = learner.predict(featurize(x_raw, rff))
        mistakes += label != labels[idx]
        errors[t] = mistakes / (t + 1)
        learner.update(prepare_stream_record(x_raw, int(labels[idx]), rff))
    holdout = None
    if len(test):
        wrong = 0
        for idx in test:
            raw = scaler.transform(features[idx]) if scaler is not None else features[idx]
            wrong += learner.predict(featurize(raw, rff))[0] != labels[idx]
        holdout = wrong / len(test)
    return learner, errors, holdout


def run_stream(config, data=None):
    """Progressive validation of one learner over several random orderings of a dataset.

    ``data`` may be a ``(features, labels)`` pair; otherwise the CSV at
    ``config.dataset_path`` is loaded. The seed drives both the
    orderings and the random feature frequencies.
    """
    config.validate()
    if data is None:
        if config.dataset_path is None:
            raise ConfigError("no dataset given")
        data = load_csv(config.dataset_path)
    features, labels = data
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(config.seed)
    rff = None
    if config.rff_dim is not None:
        rff = RffMap(features.shape[1], config.rff_dim, config.rff_sigma, seed=config.seed)
    start = time.perf_counter()
    errors, logs, holdouts = [], [], []
    counts = {"evict": 0, "merge": 0, "merge_failed": 0}
    learner = None
    for _ in range(config.permutations):
        order = rng.permutation(len(labels))
        learner, err, holdout = _stream_once(config, features, labels, order, rff)
        errors.append(err)
        if holdout is not None:
            holdouts.append(holdout)
        if isinstance(learner, VirtualVectorMachine):
            for k, v in learner.decision_counts().items():
                counts[k] += v
            logs.append([(d.step, d.kind, tuple(d.indices)) for d in learner.decisions])
        else:
            logs.append([])
    report = RunReport(config, np.array(errors), counts, logs, holdouts, time.perf_counter() - start)
    if config.snapshot_path is not None:
        save_snapshot(learner, config.snapshot_path)
    if config.output_path is not None:
        report.write(config.output_path)
    return report


@dataclass(frozen=True)
class MixtureSpec:
    """Two Gaussian classes at +/- center, resampled until each point lies on its own side of
    the line through the origin orthogonal to ``center``; this keeps the set separable."""

    n_per_class: int = 150
    center: tuple = (0.6, 0.3)
    spread: float = 0.6


def make_fig1_data(rng, spec=MixtureSpec()):
    center = np.asarray(spec.center, dtype=float)
    raw, labels = [], []
    for sign in (1, -1):
        kept = 0
        while kept < spec.n_per_class:
            p = sign * center + spec.spread * rng.standard_normal(2)
            if sign * float(p @ center) > 0:
                raw.append(p)
                labels.append(sign)
                kept += 1
    raw, labels = np.array(raw), np.array(labels)
    order = rng.permutation(len(labels))
    return raw[order], labels[order]


@dataclass(frozen=True)
class Fig1Config:
    runs: int = 20
    buffers: tuple = (10, 40)
    epsilon: float = 0.01
    k_pairs: int = 1
    n_samples: int = 200_000
    seed: int = 0
    mixture: MixtureSpec = MixtureSpec()
    ep_sweeps: int = 5
    batch_sweeps: int = 50


def _final_means(x, cfg):
    lik = StepLikelihood(cfg.epsilon)
    dim = x.shape[1]
    out = {"ep": ep_batch(x, cfg.epsilon, EpConfig(max_sweeps=cfg.batch_sweeps)).surrogate.mean}
    q = MomentGaussian.standard(dim)
    for row in x:
        q = adf_step(q, row, lik)
    out["adf"] = q.mean
    ep = EpConfig(max_sweeps=cfg.ep_sweeps)
    for b in cfg.buffers:
        vvm = VirtualVectorMachine(dim, b, cfg.k_pairs, "full_kl", cfg.epsilon, ep)
        window = WindowEpState(dim, b, cfg.epsilon, ep)
        for row in x:
            vvm.update(row)
            window.update(row)
        out[f"vvm_{b}"] = vvm.surrogate.mean
        out[f"window_ep_{b}"] = window.surrogate.mean
    return out


def fig1_study(cfg=Fig1Config()):
    """Squared error of each learner's final posterior mean against a Monte Carlo reference.

    Returns ``{"mse": {method: mean over runs}, "per_run": {method: [...]},
    "mc_stderr": [...]}``.
    """
    lik = StepLikelihood(cfg.epsilon)
    per_run = {}
    stderr = []
    for run in range(cfg.runs):
        rng = np.random.default_rng([cfg.seed, run])
        raw, labels = make_fig1_data(rng, cfg.mixture)
        x = np.array([prepare_stream_record(r, int(y)) for r, y in zip(raw, labels)])
        reference, se = posterior_mean_mc(MomentGaussian.standard(x.shape[1]), x, lik,
                                          SamplerConfig(cfg.n_samples, seed=cfg.seed * 1000 + run))
        stderr.append(float(np.max(se)))
        for name, mean in _final_means(x, cfg).items():
            per_run.setdefault(name, []).append(float(np.mean((mean - reference) ** 2)))
    mse = {name: float(np.mean(v)) for name, v in per_run.items()}
    return {"mse": mse, "per_run": per_run, "mc_stderr": stderr}


def sigma_search(config, sigmas, validation_fraction=0.2, data=None):
    """Pick the RBF width with the smallest validation error.

    Each candidate trains one pass over the first part of a seeded
    shuffle and is scored on the rest. Returns ``(best_sigma, {sigma: error})``.
    """
    if not sigmas:
        raise ConfigError("no sigma candidates given")
    if not 0.0 < validation_fraction < 1.0:
        raise ConfigError("validation_fraction must lie in (0, 1)")
    if config.rff_dim is None:
        raise ConfigError("sigma search needs rff_dim")
    if data is None:
        data = load_csv(config.dataset_path)
    results = {}
    for sigma in sigmas:
        trial = replace(config, rff_sigma=float(sigma), permutations=1, holdout=validation_fraction,
                        output_path=None, snapshot_path=None)
        results[float(sigma)] = float(run_stream(trial, data).holdout_errors[0])
    best = min(results, key=lambda s: (results[s], s))
    return best, results
