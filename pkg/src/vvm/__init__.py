"""Virtual vector machines for bounded-memory Bayesian online classification."""

from .baselines import AdfLearner, PaState, WindowEpState, ep_batch, pa_step, window_ep_step
from .ep import EpConfig, EpResult, adf_step, predict, run_ep
from .features import RffMap, expand, featurize, prepare_stream_record
from .gaussian import MomentGaussian, NaturalGaussian, NotPositiveDefinite, SiteFactor
from .harness import ConfigError, ExperimentConfig, ParseError, RunReport, run_stream
from .inverse_adf import NoValidRoot, RootNotFound, inverse_adf, inverse_adf_gaussian
from .likelihood import StepLikelihood, adf_moments, site_divergence
from .machine import (
    ScoreMode,
    VirtualVectorMachine,
    VvmConfig,
    VvmState,
    export_snapshot,
    import_snapshot,
    process_point,
)
from .pairwise import bivariate_tilt, bivariate_tilt_moments

__all__ = [
    "AdfLearner", "ConfigError", "EpConfig", "EpResult", "ExperimentConfig", "MomentGaussian",
    "NaturalGaussian", "NoValidRoot", "NotPositiveDefinite", "PaState", "ParseError", "RffMap",
    "RootNotFound", "RunReport", "ScoreMode", "SiteFactor", "StepLikelihood", "VirtualVectorMachine",
    "VvmConfig", "VvmState", "WindowEpState", "adf_moments", "adf_step", "bivariate_tilt",
    "bivariate_tilt_moments", "ep_batch", "expand", "export_snapshot", "featurize",
    "import_snapshot", "inverse_adf", "inverse_adf_gaussian", "pa_step", "predict",
    "prepare_stream_record", "process_point", "run_ep", "run_stream", "site_divergence",
    "window_ep_step",
]
