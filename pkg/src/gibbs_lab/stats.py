"""Estimates with standard errors, log-space weights, effective sample size."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "DEFAULT_ESS_FLOOR",
    "Estimate",
    "LowESSWarning",
    "bootstrap_stderr",
    "effective_sample_size",
    "mean_estimate",
    "normalized_weights",
    "weighted_mean",
]

DEFAULT_ESS_FLOOR = 100.0


class LowESSWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo value with its standard error.

    ``upper_bound`` is set instead of a meaningful ``value`` when an event
    was never observed (95% one-sided bound, rule of three).
    """

    value: complex | float
    stderr: float
    n: int
    ess: float
    warnings: tuple[str, ...] = field(default=())
    upper_bound: float | None = None

    def z_score(self, target: complex | float) -> float:
        d = abs(self.value - target)
        if self.stderr == 0:
            return 0.0 if d == 0 else math.inf
        return d / self.stderr

    def within(self, target: complex | float, n_sigma: float = 3.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.stderr

    def as_dict(self) -> dict:
        v = self.value
        d = {"value": v.real if isinstance(v, complex) else float(v),
             "stderr": self.stderr, "n": self.n, "ess": self.ess}
        if isinstance(v, complex):
            d["value_imag"] = v.imag
        if self.upper_bound is not None:
            d["upper_bound"] = self.upper_bound
        if self.warnings:
            d["warnings"] = list(self.warnings)
        return d


def mean_estimate(x: np.ndarray) -> Estimate:
    """Plain sample mean with its standard error."""
    x = np.asarray(x)
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    m = x.mean()
    se = float(np.sqrt(np.mean(np.abs(x - m) ** 2) / max(n - 1, 1))) if n > 1 else math.inf
    value = complex(m) if np.iscomplexobj(x) else float(m)
    return Estimate(value, se, n, float(n))


def normalized_weights(log_w: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """``w_i / sum w`` from log-weights; masked-out samples get weight 0."""
    log_w = np.asarray(log_w, dtype=np.float64)
    if mask is not None:
        log_w = np.where(mask, log_w, -np.inf)
    top = logsumexp(log_w)
    if not np.isfinite(top):
        raise ValueError("all weights vanish")
    return np.exp(log_w - top)


def effective_sample_size(log_w: np.ndarray, mask: np.ndarray | None = None) -> float:
    """``(sum w)^2 / sum w^2`` computed in log space."""
    log_w = np.asarray(log_w, dtype=np.float64)
    if mask is not None:
        log_w = np.where(mask, log_w, -np.inf)
    return float(np.exp(2.0 * logsumexp(log_w) - logsumexp(2.0 * log_w)))


def weighted_mean(log_w: np.ndarray, phi: np.ndarray, mask: np.ndarray | None = None,
                  ess_floor: float = DEFAULT_ESS_FLOOR) -> Estimate:
    """Self-normalized importance-sampling estimate of ``E_Q[phi]``.

    The standard error is the delta-method one for a ratio estimator,
    ``sqrt(sum wn_i^2 |phi_i - value|^2)`` with ``wn`` the normalized weights.
    """
    phi = np.asarray(phi)
    wn = normalized_weights(log_w, mask)
    value = np.sum(wn * phi)
    se = float(np.sqrt(np.sum(wn ** 2 * np.abs(phi - value) ** 2)))
    ess = 1.0 / float(np.sum(wn ** 2))
    notes = ()
    if ess < ess_floor:
        msg = f"effective sample size {ess:.1f} below floor {ess_floor:g}"
        notes = (msg,)
        warnings.warn(msg, LowESSWarning, stacklevel=2)
    value = complex(value) if np.iscomplexobj(phi) else float(value)
    return Estimate(value, se, int(phi.size), ess, notes)


def bootstrap_stderr(x: np.ndarray, statistic, n_boot: int = 200, seed: int = 0) -> float:
    """Bootstrap standard error of ``statistic(x)`` with a fixed resampling seed."""
    x = np.asarray(x)
    rng = np.random.Generator(np.random.Philox(seed))
    n = x.size
    reps = np.empty(n_boot)
    for b in range(n_boot):
        reps[b] = statistic(x[rng.integers(0, n, n)])
    return float(np.std(reps, ddof=1))
