"""Shift-invariant multivariate sparse coding and dictionary learning for
multichannel signals such as EEG."""

__version__ = "0.1.0"

from .errors import ConfigError, MvdictError, ParseError, RangeError, ShapeError, SolverError
from .model import (ContinuousRecord, EpochSet, KernelDictionary, MultivariateSignal,
                    ShiftKernel, SparseCode, instantiate_atom, synthesize)
from .gabor import GaborGrid, build_gabor_dictionary, target_grid
from .pursuit import PursuitConfig, decompose
from .learning import LearnConfig, mdla_train
from .evoked import EvokedPattern, grand_average, learn_ep_kernel, ls_estimate
from .metrics import dictionary_recovery, max_correlation, reconstruction_rate, rho_curve

__all__ = [
    "ConfigError", "MvdictError", "ParseError", "RangeError", "ShapeError", "SolverError",
    "ContinuousRecord", "EpochSet", "KernelDictionary", "MultivariateSignal", "ShiftKernel",
    "SparseCode", "instantiate_atom", "synthesize", "GaborGrid", "build_gabor_dictionary",
    "target_grid", "PursuitConfig", "decompose", "LearnConfig", "mdla_train", "EvokedPattern",
    "grand_average", "learn_ep_kernel", "ls_estimate", "dictionary_recovery", "max_correlation",
    "reconstruction_rate", "rho_curve",
]
