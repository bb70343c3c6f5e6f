"""Gaussian measures of the interpolation family, realized on one Gaussian stream.

All samplers map the same standard complex Gaussians ``g_n`` to Fourier
coefficients ``u_hat(n) = amp(n) * g_n``; only the spectral amplitude differs:

    mu_beta        1 / sqrt(1 + bt n^2)
    P_{0,beta}     bt^{-1/2} / n
    tilted mu      1 / sqrt(1 - 12 beta a + bt n^2)
    white noise    1

with ``bt = 4 pi^2 beta``.  Sharing the stream gives the pathwise coupling
between members of the family (white noise is the beta = 0 member).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import SpectralField
from .rng import GaussianVector, SeedPath, draw_gaussians

__all__ = [
    "IllDefinedMeasureError",
    "MeasureParams",
    "mu_beta_amplitude",
    "mu_tilde_amplitude",
    "p0_beta_amplitude",
    "sample_P0_beta",
    "sample_mu_beta",
    "sample_mu_tilde_beta",
    "sample_white_noise",
]


class IllDefinedMeasureError(ValueError):
    """The tilt 12*beta*a_beta reached 1; the tilted Gaussian does not exist."""


@dataclass(frozen=True)
class MeasureParams:
    """Which member of the measure family is meant.

    ``sign`` is +1 for the focusing weight ``exp(+beta int u^p)`` with the L^2
    cutoff, -1 for the defocusing ``exp(-beta int u^4)`` (no cutoff).
    """

    beta: float
    n_modes: int
    cutoff_K: float = 1.0
    power_p: int = 4
    sign: int = 1

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be finite and >= 0")
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if self.cutoff_K <= 0:
            raise ValueError("cutoff_K must be positive")
        if self.power_p not in (3, 4):
            raise ValueError("power_p must be 3 or 4")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.sign == -1 and self.power_p != 4:
            raise ValueError("the defocusing measure is defined for p = 4 only")

    @property
    def beta_tilde(self) -> float:
        return 4.0 * math.pi ** 2 * self.beta

    @property
    def has_cutoff(self) -> bool:
        return self.sign == 1

    @property
    def cutoff_level(self) -> float:
        """Threshold ``K beta^{-1/2}`` on ``int u^2``."""
        return self.cutoff_K / math.sqrt(self.beta)

    def with_(self, **kw) -> "MeasureParams":
        d = dict(beta=self.beta, n_modes=self.n_modes, cutoff_K=self.cutoff_K,
                 power_p=self.power_p, sign=self.sign)
        d.update(kw)
        return MeasureParams(**d)


def _modes(n_modes: int) -> np.ndarray:
    return np.arange(1, n_modes + 1, dtype=np.float64)


def mu_beta_amplitude(beta: float, n_modes: int) -> np.ndarray:
    bt = 4.0 * math.pi ** 2 * beta
    return 1.0 / np.sqrt(1.0 + bt * _modes(n_modes) ** 2)


def p0_beta_amplitude(beta: float, n_modes: int) -> np.ndarray:
    if beta <= 0:
        raise ValueError("P_{0,beta} needs beta > 0")
    bt = 4.0 * math.pi ** 2 * beta
    return 1.0 / (math.sqrt(bt) * _modes(n_modes))


def mu_tilde_amplitude(beta: float, a_beta: float, n_modes: int) -> np.ndarray:
    shift = 12.0 * beta * a_beta
    if shift >= 1.0:
        raise IllDefinedMeasureError(f"12*beta*a_beta = {shift:.6g} >= 1")
    bt = 4.0 * math.pi ** 2 * beta
    return 1.0 / np.sqrt(1.0 - shift + bt * _modes(n_modes) ** 2)


def _gaussians(params: MeasureParams, state) -> GaussianVector:
    if isinstance(state, GaussianVector):
        if len(state) != params.n_modes:
            raise ValueError(f"GaussianVector has {len(state)} entries, expected {params.n_modes}")
        return state
    if isinstance(state, SeedPath):
        return draw_gaussians(params.n_modes, state)
    raise TypeError("state must be a SeedPath or a GaussianVector")


def sample_mu_beta(params: MeasureParams, state: SeedPath | GaussianVector) -> SpectralField:
    if params.beta <= 0:
        raise ValueError("mu_beta needs beta > 0; use sample_white_noise for beta = 0")
    g = _gaussians(params, state)
    return SpectralField(g.entries * mu_beta_amplitude(params.beta, params.n_modes), params.beta)


def sample_P0_beta(params: MeasureParams, state: SeedPath | GaussianVector) -> SpectralField:
    g = _gaussians(params, state)
    return SpectralField(g.entries * p0_beta_amplitude(params.beta, params.n_modes), params.beta)


def sample_white_noise(n_modes: int, state: SeedPath | GaussianVector) -> SpectralField:
    g = _gaussians(MeasureParams(0.0, n_modes), state)
    return SpectralField(g.entries, 0.0)


def sample_mu_tilde_beta(params: MeasureParams, a_beta: float,
                         state: SeedPath | GaussianVector) -> SpectralField:
    if params.beta <= 0:
        raise ValueError("the tilted measure needs beta > 0")
    amp = mu_tilde_amplitude(params.beta, a_beta, params.n_modes)
    g = _gaussians(params, state)
    return SpectralField(g.entries * amp, params.beta)
