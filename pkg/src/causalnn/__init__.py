"""Targeted (TCNN) and interpretable (ICNN) causal neural networks for CATE estimation."""
from .causal_models import (
    KINDS,
    CausalModel,
    ScoreFunction,
    TrainConfig,
    default_config,
    fit,
    icnn_forward,
    init_model,
    predict_cate,
    robinson_predict,
    score_functions,
)
from .dataset import Dataset
from .evaluation import BenchmarkReport, coverage_report, pehe, run_benchmark, split
from .synth_dgp import DgpConfig, simulate
from .uncertainty import credible_band, posterior_cate, score_bands

__version__ = "0.1.0"
