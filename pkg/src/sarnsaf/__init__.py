"""Sparsity-aware robust normalized subband adaptive filtering."""

from .aop import AdaptiveRho, SubbandStats, delta_of_rho, rho_opt
from .core import (
    DivergenceError,
    LeastSquares,
    LogPenalty,
    ModifiedHuber,
    NullPenalty,
    SafState,
    coarse_update,
    penalty_direction,
    subband_errors,
    zero_attract,
)
from .filterbank import AnalysisBank, PrototypeFilter, analyze, design_bank, design_prototype, modulate
from .harness import ALGORITHMS, ExperimentConfig, LearningCurve, nmsd, run_experiment, run_trial
from .scenario import NoiseModel, SystemModel, gen_ar1, sample_alpha_stable, sparseness, synth_system

__version__ = "0.1.0"
