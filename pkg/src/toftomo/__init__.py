"""Time-of-flight tomography of a single particle's motional state.

Forward simulation of rotated-quadrature momentum images, Richardson-Lucy
deconvolution, maximum-likelihood density-matrix reconstruction, Wigner
functions, parametric bootstrap and the anharmonic-trap systematic studies.
"""

__version__ = "0.1.0"

from .dynamics import MixtureSpec, TrapModel, evolve, prepare_state, quadrature_distribution
from .estimators import DampedSinusoidRegressor, QuadratureTomography, RichardsonLucyDeconvolver
from .exceptions import (
    AliasingError,
    ConfigError,
    DegenerateDataError,
    TomographyError,
    TruncationError,
    TruncationWarning,
    UnsupportedStateError,
)
from .fock import OscillatorSpec, fidelity, negativity, trace_distance, wigner
from .mle import MleConfig, MleResult, reconstruct
from .quadrature import QuadratureDataset, uniform_angles

__all__ = [
    "__version__",
    "OscillatorSpec",
    "TrapModel",
    "MixtureSpec",
    "QuadratureDataset",
    "MleConfig",
    "MleResult",
    "QuadratureTomography",
    "RichardsonLucyDeconvolver",
    "DampedSinusoidRegressor",
    "evolve",
    "prepare_state",
    "quadrature_distribution",
    "reconstruct",
    "wigner",
    "negativity",
    "fidelity",
    "trace_distance",
    "uniform_angles",
    "TomographyError",
    "TruncationError",
    "TruncationWarning",
    "UnsupportedStateError",
    "DegenerateDataError",
    "AliasingError",
    "ConfigError",
]
