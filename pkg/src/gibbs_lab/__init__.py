"""Monte Carlo laboratory for Gibbs measures of a periodic field near white noise.

Modules: ``field`` (spectral fields), ``rng``/``sampler`` (Gaussian measures),
``wick`` (Wick-ordered functionals), ``measure`` (weighted ensembles and
estimators), ``kdv`` (Galerkin KdV flow) and ``harness`` (experiments and CLI).
"""
from .field import SpectralField
from .harness import ConfigError, ExperimentConfig, run
from .measure import TestFunction, build_ensemble, char_functional
from .rng import SeedPath
from .sampler import MeasureParams, sample_mu_beta

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MeasureParams",
    "SeedPath",
    "SpectralField",
    "TestFunction",
    "build_ensemble",
    "char_functional",
    "run",
    "sample_mu_beta",
]

__version__ = "0.1.0"
