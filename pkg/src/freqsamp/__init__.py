"""Differentiable audio systems sampled on a frequency grid."""

from .antialias import AliasGuard, choose_gamma, enveloped_grid, recover_ir
from .autodiff import Tape, Var, grad_check
from .errors import (
    ConfigurationError,
    DomainError,
    FreqSampError,
    IllConditionedError,
    InvalidGridError,
    NonHermitianError,
    NumericalError,
    ShapeError,
    SingularDenominatorError,
)
from .filters import GEQ, SVF, Biquad, ParallelBiquad, ParallelGEQ, ParallelSVF, biquad_coeffs, geq_design
from .grid import ComplexResponse, FrequencyGrid, RealSignal, dft_real, evaluate_rational, idft_hermitian, make_grid
from .modules import Delay, DspModule, Filter, Gain, Matrix, ParallelDelay, ParallelFilter, ParallelGain
from .system import Magnitude, Recursion, Series, Shell, system_from_dict, system_to_dict, validate_flow
from .training import Dataset, LossTerm, TrainConfig, loss_spectral_flatness, loss_temporal_sparsity, train

__all__ = [
    "AliasGuard", "choose_gamma", "enveloped_grid", "recover_ir",
    "Tape", "Var", "grad_check",
    "ConfigurationError", "DomainError", "FreqSampError", "IllConditionedError", "InvalidGridError",
    "NonHermitianError", "NumericalError", "ShapeError", "SingularDenominatorError",
    "GEQ", "SVF", "Biquad", "ParallelBiquad", "ParallelGEQ", "ParallelSVF", "biquad_coeffs", "geq_design",
    "ComplexResponse", "FrequencyGrid", "RealSignal", "dft_real", "evaluate_rational", "idft_hermitian",
    "make_grid",
    "Delay", "DspModule", "Filter", "Gain", "Matrix", "ParallelDelay", "ParallelFilter", "ParallelGain",
    "Magnitude", "Recursion", "Series", "Shell", "system_from_dict", "system_to_dict", "validate_flow",
    "Dataset", "LossTerm", "TrainConfig", "loss_spectral_flatness", "loss_temporal_sparsity", "train",
]
