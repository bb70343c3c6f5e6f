"""Weighted ensembles over mu_beta and the estimators built on them.

An ensemble is stored as per-sample scalars (``int u^2``, ``int u^3``,
``int u^4``, the Wick parts, a few low Fourier coefficients) computed block
by block; any individual field can be regenerated from its seed path.  The
Gibbs measures are reached by self-normalized importance weights
``1_{int u^2 <= K beta^{-1/2}} exp(beta * sign * int u^p)`` kept in log space.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats
from scipy.special import logsumexp

from .field import (SpectralField, batch_synthesize, dyadic_blocks, l2_norm_sq, project,
                    quadrature_grid_size)
from .rng import GaussianVector, SeedPath, draw_gaussians, gaussian_block
from .sampler import (IllDefinedMeasureError, MeasureParams, mu_beta_amplitude,
                      sample_mu_beta)
from .stats import (DEFAULT_ESS_FLOOR, Estimate, LowESSWarning, bootstrap_stderr,
                    effective_sample_size, mean_estimate, weighted_mean)
from .wick import a_beta_closed_form, batch_functionals

__all__ = [
    "ChiSquareCheck",
    "DegenerateEnsembleError",
    "DyadicAuditReport",
    "MomentQuery",
    "PreconditionError",
    "RegionMass",
    "TailFit",
    "TailQuery",
    "TestFunction",
    "WeightedEnsemble",
    "build_ensemble",
    "char_functional",
    "chi2_tail_check",
    "companion_factor",
    "cutoff_inclusion_threshold",
    "cutoff_inclusion_violations",
    "defocusing_ess_fraction",
    "dyadic_tail_audit",
    "dyadic_tail_bound",
    "exp_moment",
    "fit_tail_exponent",
    "gaussian_char_functional",
    "integrability_check",
    "moment_norm",
    "normalizer_exact",
    "normalizer_mc",
    "region_masses",
    "tail_probability",
    "weighted_log_partition",
]

TABLE_BLOCK = 256
DEFAULT_N_LOW = 16


class DegenerateEnsembleError(ValueError):
    """The cutoff indicator is false for every sample."""


class PreconditionError(ValueError):
    """An estimator was called outside the range where its bound is claimed."""


# ------------------------------------------------------------------ types

@dataclass(frozen=True)
class TestFunction:
    """Smooth real mean-zero test function given by ``f_hat_n``, n = 1..len."""

    __test__ = False  # not a pytest class

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if c.ndim != 1:
            raise ValueError("coeffs must be 1-d")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_modes(cls, modes: dict[int, complex], normalize: bool = True) -> "TestFunction":
        if not modes:
            return cls(np.zeros(1, dtype=np.complex128))
        if min(modes) < 1:
            raise ValueError("modes must be >= 1 (mean zero)")
        c = np.zeros(max(modes), dtype=np.complex128)
        for n, v in modes.items():
            c[n - 1] = v
        f = cls(c)
        if normalize and f.norm_sq > 0:
            f = cls(c / math.sqrt(f.norm_sq))
        return f

    @property
    def norm_sq(self) -> float:
        """``||f||^2_{L^2} = 2 sum_{n>=1} |f_hat_n|^2``."""
        return float(2.0 * np.sum(np.abs(self.coeffs) ** 2))

    @property
    def support(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        return int(nz[-1] + 1) if nz.size else 0

    def as_field(self) -> SpectralField:
        return SpectralField(self.coeffs)


@dataclass(frozen=True)
class TailQuery:
    lam: float
    fitted_exponent: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class MomentQuery:
    q: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("q must be >= 2")
        if not self.r > 0:
            raise ValueError("r must be positive")


# --------------------------------------------------------------- ensembles

def _table_block(args) -> dict[str, np.ndarray]:
    beta, n_modes, seed, stream, start, count, n_low = args
    g = gaussian_block(n_modes, seed, stream, start, count)
    d = batch_functionals(g, beta, n_low=n_low)
    d["low"] = d["low"] if n_low else np.zeros((count, 0), dtype=np.complex128)
    return d


@lru_cache(maxsize=32)
def _cached_table(beta: float, n_modes: int, seed: int, stream: int, n: int, n_low: int,
                  workers: int) -> dict[str, np.ndarray]:
    jobs = [(beta, n_modes, seed, stream, s, min(TABLE_BLOCK, n - s), n_low)
            for s in range(0, n, TABLE_BLOCK)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_table_block, jobs, chunksize=4))
    else:
        parts = [_table_block(j) for j in jobs]
    table = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    for v in table.values():
        v.setflags(write=False)
    return table


@dataclass(frozen=True)
class WeightedEnsemble:
    """``n`` draws from mu_beta with Gibbs log-weights and cutoff indicators.

    ``table`` holds per-sample scalars; ``table["low"]`` the first ``n_low``
    coefficients.  Sample ``i`` is driven by the Gaussians at
    ``SeedPath(seed, stream, i)``.
    """

    params: MeasureParams
    seed: int
    stream: int
    n: int
    table: dict = field(repr=False)
    log_weight: np.ndarray = field(repr=False)
    indicator: np.ndarray = field(repr=False)

    @property
    def n_low(self) -> int:
        return self.table["low"].shape[1]

    @property
    def ess(self) -> float:
        return effective_sample_size(self.log_weight, self.indicator)

    @property
    def acceptance_fraction(self) -> float:
        return float(np.mean(self.indicator))

    def seed_path(self, i: int) -> SeedPath:
        return SeedPath(self.seed, self.stream, i)

    def gaussians(self, i: int) -> GaussianVector:
        if not 0 <= i < self.n:
            raise IndexError(i)
        return draw_gaussians(self.params.n_modes, self.seed_path(i))

    def field(self, i: int) -> SpectralField:
        return sample_mu_beta(self.params, self.gaussians(i))

    def __getitem__(self, i: int) -> tuple[SpectralField, GaussianVector]:
        g = self.gaussians(i)
        return sample_mu_beta(self.params, g), g

    def __len__(self) -> int:
        return self.n

    def reweighted(self, params: MeasureParams) -> "WeightedEnsemble":
        """Same draws, weights for another (p, K, sign) at the same beta and N."""
        if (params.beta, params.n_modes) != (self.params.beta, self.params.n_modes):
            raise ValueError("reweighting needs the same beta and n_modes")
        return _weigh(params, self.seed, self.stream, self.n, self.table)


def _weigh(params: MeasureParams, seed: int, stream: int, n: int, table: dict) -> WeightedEnsemble:
    key = "int_u4" if params.power_p == 4 else "int_u3"
    log_w = params.beta * params.sign * table[key]
    if params.has_cutoff:
        indicator = table["int_u2"] <= params.cutoff_level
    else:
        indicator = np.ones(n, dtype=bool)
    if not indicator.any():
        raise DegenerateEnsembleError(
            f"cutoff int u^2 <= {params.cutoff_level:.4g} excludes every sample; K too small or beta too large")
    return WeightedEnsemble(params, seed, stream, n, table, log_w, indicator)


def build_ensemble(params: MeasureParams, n: int, rng: SeedPath | int,
                   n_low: int = DEFAULT_N_LOW, workers: int = 1) -> WeightedEnsemble:
    """Draw ``n`` samples of mu_beta and attach Gibbs log-weights and indicators.

    Results depend only on ``(params, n, seed, stream)``: blocks are
    generated from counter-based streams and concatenated in index order,
    whatever ``workers`` is.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if params.beta <= 0:
        raise ValueError("the Gibbs ensemble needs beta > 0")
    path = rng if isinstance(rng, SeedPath) else SeedPath(int(rng))
    n_low = min(n_low, params.n_modes)
    table = _cached_table(float(params.beta), params.n_modes, path.seed, path.stream, n, n_low,
                          max(1, workers))
    return _weigh(params, path.seed, path.stream, n, table)


# ------------------------------------------------------ characteristic functionals

def _pairings(ens: WeightedEnsemble, f: TestFunction) -> np.ndarray:
    """``<f, u> = 2 Re sum_n f_hat_n conj(u_hat_n)`` for every sample."""
    S = f.support
    if S > ens.params.n_modes:
        raise ValueError(f"test function supported up to |n| = {S} > N = {ens.params.n_modes}")
    fc = f.coeffs[:S]
    if S <= ens.n_low:
        return 2.0 * np.real(ens.table["low"][:, :S] @ np.conj(fc))
    amp = mu_beta_amplitude(ens.params.beta, S)
    out = np.empty(ens.n)
    for start in range(0, ens.n, TABLE_BLOCK):
        count = min(TABLE_BLOCK, ens.n - start)
        g = gaussian_block(S, ens.seed, ens.stream, start, count)
        out[start: start + count] = 2.0 * np.real((g * amp) @ np.conj(fc))
    return out


def char_functional(ens: WeightedEnsemble, f: TestFunction,
                    ess_floor: float = DEFAULT_ESS_FLOOR) -> Estimate:
    """Self-normalized estimate of ``int exp(i <f,u>) dQ``."""
    if f.support == 0:
        return Estimate(1.0 + 0.0j, 0.0, ens.n, ens.ess)
    phi = np.exp(1j * _pairings(ens, f))
    return weighted_mean(ens.log_weight, phi, ens.indicator, ess_floor)


def gaussian_char_functional(f: TestFunction, amplitude: np.ndarray) -> float:
    """``E exp(i <f,u>)`` for the Gaussian field ``u_hat_n = amplitude_n g_n``.

    Equals ``exp(-1/2 sum_{n != 0} |f_hat_n|^2 amplitude_n^2)``.
    """
    S = f.support
    if S > len(amplitude):
        raise ValueError("amplitude shorter than the test function support")
    return math.exp(-float(np.sum(np.abs(f.coeffs[:S]) ** 2 * np.asarray(amplitude)[:S] ** 2)))


# ------------------------------------------------------------- normalizer

def _log_sinh(x: float) -> float:
    return x + math.log1p(-math.exp(-2.0 * x)) - math.log(2.0)


def _tilt(beta: float) -> tuple[float, float]:
    a = a_beta_closed_form(beta)
    shift = 12.0 * beta * a
    if shift >= 1.0:
        raise IllDefinedMeasureError(f"12*beta*a_beta = {shift:.6g} >= 1")
    return a, shift


def normalizer_exact(beta: float) -> float:
    """``int exp(6 beta a_beta int u^2) d mu_beta`` in closed form (N = infinity).

    With ``c = beta_tilde^{-1/2}`` and ``s = sqrt(1 - 12 beta a_beta)``,
    ``Z = [sinh(pi c) / (pi c)] * [pi s c / sinh(pi s c)]``, evaluated through
    log-sinh differences so that tiny beta does not overflow.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    _, shift = _tilt(beta)
    c = 1.0 / (2.0 * math.pi * math.sqrt(beta))
    s = math.sqrt(1.0 - shift)
    x, y = math.pi * c, math.pi * s * c
    return math.exp(_log_sinh(x) - math.log(x) + math.log(y) - _log_sinh(y))


def companion_factor(beta: float) -> float:
    """``exp(-3 beta a_beta^2)`` with the infinite-sum a_beta."""
    a = a_beta_closed_form(beta)
    return math.exp(-3.0 * beta * a * a)


def normalizer_mc(beta: float, n_modes: int, n: int, rng: SeedPath | int) -> Estimate:
    """Direct Monte Carlo of ``E_{mu_beta} exp(6 beta a_beta int u^2)`` at N modes."""
    path = rng if isinstance(rng, SeedPath) else SeedPath(int(rng))
    a, _ = _tilt(beta)
    amp2 = mu_beta_amplitude(beta, n_modes) ** 2
    lw = np.empty(n)
    for start in range(0, n, TABLE_BLOCK):
        count = min(TABLE_BLOCK, n - start)
        g = gaussian_block(n_modes, path.seed, path.stream, start, count)
        lw[start: start + count] = 6.0 * beta * a * 2.0 * (np.abs(g) ** 2 @ amp2)
    return _log_mean_estimate(lw)


def _log_mean_estimate(log_values: np.ndarray) -> Estimate:
    """Mean of ``exp(log_values)`` with its standard error, scaled to avoid overflow."""
    lv = np.asarray(log_values, dtype=np.float64)
    n = lv.size
    finite = np.isfinite(lv)
    if not finite.any():
        return Estimate(0.0, 0.0, n, float(n))
    top = float(np.max(lv[finite]))
    w = np.exp(lv - top)
    m = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    scale = math.exp(top) if top < 709 else math.inf
    return Estimate(m * scale, se * scale, n, effective_sample_size(lv))


# ----------------------------------------------------------------- tails

def _hit_estimate(hits: np.ndarray) -> Estimate:
    n = hits.size
    k = int(hits.sum())
    p = k / n
    if k == 0:
        # one-sided 95% bound for zero observed events
        return Estimate(0.0, 0.0, n, float(n), ("zero hits",), upper_bound=-math.log(0.05) / n)
    return Estimate(p, math.sqrt(p * (1.0 - p) / n), n, float(n))


def tail_probability(params: MeasureParams, query: TailQuery, n: int, rng: SeedPath | int,
                     require_lambda_ge_1: bool = True) -> Estimate:
    """Plain MC over mu_beta of ``{beta ||u||_4^4 > lambda, int u^2 <= K beta^{-1/2}}``."""
    if require_lambda_ge_1 and query.lam < 1:
        raise PreconditionError("tail experiments need lambda >= 1")
    ens = build_ensemble(params.with_(power_p=4, sign=1), n, rng)
    hits = (params.beta * ens.table["int_u4"] > query.lam) & ens.indicator
    return _hit_estimate(hits)


@dataclass(frozen=True)
class TailFit:
    """Weighted fit of ``log(-log P)`` against ``log lambda``; the slope is ``1 + delta``."""

    lambdas: tuple[float, ...]
    estimates: tuple[Estimate, ...]
    exponent: float
    stderr: float
    n_points: int

    @property
    def lower_95(self) -> float:
        """One-sided 95% lower confidence bound on the exponent."""
        return self.exponent - stats.norm.ppf(0.95) * self.stderr


def fit_tail_exponent(params: MeasureParams, lambdas, n: int, rng: SeedPath | int) -> TailFit:
    """Fit the tail exponent over the points with at least one hit (and P < 1)."""
    lambdas = tuple(float(x) for x in lambdas)
    ests = tuple(tail_probability(params, TailQuery(lam), n, rng) for lam in lambdas)
    xs, ys, ws = [], [], []
    for lam, e in zip(lambdas, ests):
        p = e.value
        if e.upper_bound is not None or not 0 < p < 1:
            continue
        # delta method: y = log(-log p), dy/dp = 1 / (p log p)
        se_y = e.stderr / (p * abs(math.log(p)))
        xs.append(math.log(lam))
        ys.append(math.log(-math.log(p)))
        ws.append(1.0 / se_y ** 2)
    if len(xs) < 2:
        raise ValueError("need at least two lambdas with hits to fit an exponent")
    x, y, w = map(np.asarray, (xs, ys, ws))
    xbar = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xbar) ** 2)
    slope = float(np.sum(w * (x - xbar) * y) / sxx)
    return TailFit(lambdas, ests, slope, float(math.sqrt(1.0 / sxx)), len(xs))


# ----------------------------------------------------------------- moments

def moment_norm(F_samples: np.ndarray, q: float, n_boot: int = 200, seed: int = 0) -> Estimate:
    """``(E|F|^q)^{1/q}`` with a bootstrap standard error."""
    if q < 2:
        raise ValueError("q must be >= 2")
    F = np.asarray(F_samples, dtype=np.float64)

    def stat(x):
        return float(np.mean(np.abs(x) ** q) ** (1.0 / q))

    return Estimate(stat(F), bootstrap_stderr(F, stat, n_boot, seed), F.size, float(F.size))


def exp_moment(params: MeasureParams, r: float, n: int, rng: SeedPath | int) -> Estimate:
    """``E_{mu_beta}[1_{int u^2 <= K beta^{-1/2}} exp(r beta sign int u^p)]``, computed in log space."""
    if params.power_p not in (3, 4):
        raise ValueError("p must be 3 or 4")
    if r < 0:
        raise ValueError("r must be >= 0")
    ens = build_ensemble(params, n, rng)
    lv = np.where(ens.indicator, r * ens.log_weight, -np.inf)
    return _log_mean_estimate(lv)


# ----------------------------------------------------------------- chi-square

class ChiSquareCheck:
    """Exact chi-square tail against ``exp(-R^2/4)``; iterates as ``(exact_prob, bound)``.

    Both sides are also kept as logarithms because they underflow quickly.
    """

    def __init__(self, M: int, R: float, log_exact: float):
        self.M, self.R = M, R
        self.log_exact = log_exact
        self.log_bound = -R * R / 4.0

    @property
    def exact_prob(self) -> float:
        return math.exp(self.log_exact)

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound)

    @property
    def holds(self) -> bool:
        return self.log_exact <= self.log_bound

    def __iter__(self):
        return iter((self.exact_prob, self.bound))

    def __repr__(self):
        return f"ChiSquareCheck(M={self.M}, R={self.R:.6g}, log_exact={self.log_exact:.6g}, log_bound={self.log_bound:.6g})"


def _log_chi2_sf(M: int, x: float) -> float:
    q = special.gammaincc(M / 2.0, x / 2.0)
    if q > 1e-300:
        return math.log(q)
    import mpmath
    return float(mpmath.log(mpmath.gammainc(mpmath.mpf(M) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True)))


def chi2_tail_check(M: int, R: float) -> ChiSquareCheck:
    """``P[(sum_{n<=M} g_n^2)^{1/2} >= R]`` for real standard normals, against ``e^{-R^2/4}``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if R < 3.0 * math.sqrt(M) * (1 - 1e-12):
        raise PreconditionError(f"R = {R:.6g} < 3 sqrt(M) = {3 * math.sqrt(M):.6g}; the bound is not claimed there")
    return ChiSquareCheck(M, R, _log_chi2_sf(M, R * R))


# ------------------------------------------------------------ dyadic audit

@dataclass(frozen=True)
class DyadicAuditReport:
    beta: float
    M: int
    p: int
    lam: float
    estimate: Estimate
    bound: float
    block_levels: tuple[int, ...]
    block_norm_max_error: float

    @property
    def passes(self) -> bool:
        if self.estimate.upper_bound is not None:
            return self.estimate.value <= self.bound
        return self.estimate.value - 3.0 * self.estimate.stderr <= self.bound


def dyadic_tail_bound(beta: float, n_modes: int, M: int, p: int, lam: float, eps: float = 0.5) -> float:
    """Explicit union bound for ``P(beta ||P_{>M} u||_p^p > lambda)`` at truncation N.

    Block j covers ``M_{j-1} < n <= M_j`` with ``M_j = 2^j M``.  Splitting
    ``(lambda/beta)^{1/p}`` with weights ``sigma_j = (1 - 2^{-eps}) 2^{-eps (j-1)}``,
    using ``||v||_p <= (2 M_j)^{1/2 - 1/p} ||v||_2`` for a block and
    ``||v||_2^2 <= chi^2_{2 m_j} / (1 + beta_tilde M_{j-1}^2)``, each term is an
    exact chi-square tail.
    """
    bt = 4.0 * math.pi ** 2 * beta
    s = (lam / beta) ** (1.0 / p)
    total = 0.0
    for j in range(1, math.ceil(math.log2(n_modes / M)) + 1):
        lo, hi = (2 ** (j - 1)) * M, min((2 ** j) * M, n_modes)
        m = hi - lo
        if m <= 0:
            continue
        sigma = (1.0 - 2.0 ** -eps) * 2.0 ** (-eps * (j - 1))
        holder = (2.0 * (2 ** j) * M) ** (0.5 - 1.0 / p)
        x = (sigma * s / holder) ** 2 * (1.0 + bt * lo * lo)
        total += math.exp(_log_chi2_sf(2 * m, x))
    return min(total, 1.0)


def dyadic_tail_audit(params: MeasureParams, M: int, p: int, lam: float, n: int,
                      rng: SeedPath | int, delta: float = 0.05, eps: float = 0.5,
                      block_samples: int = 4) -> DyadicAuditReport:
    """MC estimate of ``P(beta ||P_{>M} u||_p^p > lambda)`` against ``dyadic_tail_bound``.

    ``||v||_p^p = int |v|^p`` is evaluated on the degree-4 quadrature grid
    (exact for p = 4).

    Refuses unless ``M >= max(beta^{-1/2-delta}, beta^{-p/2+1-delta})``.  Also
    checks per-block ``||P_{M_j} u||^2`` against direct summation on a few samples.
    """
    beta = params.beta
    need = max(beta ** (-0.5 - delta), beta ** (-p / 2.0 + 1.0 - delta))
    if M < need:
        raise PreconditionError(f"M = {M} below the required {need:.4g} for beta = {beta:g}, p = {p}")
    if M >= params.n_modes:
        raise PreconditionError("M must be below n_modes")
    path = rng if isinstance(rng, SeedPath) else SeedPath(int(rng))
    N = params.n_modes
    amp = mu_beta_amplitude(beta, N)
    vals = np.empty(n)
    for start in range(0, n, TABLE_BLOCK):
        count = min(TABLE_BLOCK, n - start)
        X = gaussian_block(N, path.seed, path.stream, start, count) * amp
        X[:, :M] = 0
        u = batch_synthesize(X, quadrature_grid_size(N, 4))
        vals[start: start + count] = np.mean(np.abs(u) ** p, axis=1)
    est = _hit_estimate(beta * vals > lam)
    levels = []
    worst = 0.0
    for i in range(min(block_samples, n)):
        g = draw_gaussians(N, path.at(i))
        u = sample_mu_beta(params, g)
        for j in dyadic_blocks(N, M):
            levels.append(j)
            lo, hi = (2 ** (j - 1)) * M, min((2 ** j) * M, N)
            nn = np.arange(lo + 1, hi + 1)
            direct = math.fsum(2.0 * np.abs(g.entries[lo:hi]) ** 2 / (1.0 + params.beta_tilde * nn * nn))
            spectral = l2_norm_sq(project(u, "block", M, j))
            worst = max(worst, abs(spectral - direct) / max(direct, 1e-300))
    bound = dyadic_tail_bound(beta, N, M, p, lam, eps)
    return DyadicAuditReport(beta, M, p, lam, est, bound, tuple(sorted(set(levels))), worst)


def integrability_check(K: float, p: int, n_modes_list, n: int, rng: SeedPath | int) -> list[Estimate]:
    """``E_{mu}[exp(int u^p) 1_{int u^2 <= K}]`` at beta = 1 for each truncation."""
    return [exp_moment(MeasureParams(1.0, N, K, p), 1.0, n, rng) for N in n_modes_list]


# ------------------------------------------------------------ region checks

def cutoff_inclusion_violations(ens: WeightedEnsemble, const_N: float) -> int:
    """Samples in ``{|int :u^2:| <= const_N beta^{-1/4}}`` that violate ``int u^2 <= K beta^{-1/2}``."""
    beta = ens.params.beta
    inside_B = np.abs(ens.table["wick_u2"]) <= const_N * beta ** -0.25
    return int(np.sum(inside_B & ~(ens.table["int_u2"] <= ens.params.cutoff_level)))


def cutoff_inclusion_threshold(K: float, const_N: float) -> float:
    """beta below which ``a_beta + const_N beta^{-1/4} <= K beta^{-1/2}`` (uses a_beta <= beta^{-1/2}/2)."""
    if K <= 0.5:
        raise PreconditionError("cutoff inclusion needs K > 1/2")
    return ((K - 0.5) / const_N) ** 4


@dataclass(frozen=True)
class RegionMass:
    const_N: float
    mass: Estimate
    scaled: float          # mass * const_N^2
    chebyshev_constant: float


def region_masses(ens: WeightedEnsemble, const_Ns=(4, 8, 16)) -> list[RegionMass]:
    """MC mass of ``A^c u B^c`` with ``A = {|int :u^4:| <= N beta^{-3/4}}``, ``B = {|int :u^2:| <= N beta^{-1/4}}``.

    The Chebyshev constant ``beta^{3/2} E[(int :u^4:)^2] + beta^{1/2} E[(int :u^2:)^2]``
    bounds ``mass * N^2``.
    """
    beta = ens.params.beta
    w4, w2 = ens.table["wick_u4"], ens.table["wick_u2"]
    cheb = float(beta ** 1.5 * np.mean(w4 ** 2) + beta ** 0.5 * np.mean(w2 ** 2))
    out = []
    for c in const_Ns:
        outside = (np.abs(w4) > c * beta ** -0.75) | (np.abs(w2) > c * beta ** -0.25)
        e = mean_estimate(outside.astype(np.float64))
        out.append(RegionMass(c, e, e.value * c * c, cheb))
    return out


def defocusing_ess_fraction(ens: WeightedEnsemble) -> float:
    """ESS / n for an ensemble (weights <= 1 in the defocusing case)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowESSWarning)
        return ens.ess / ens.n


def weighted_log_partition(ens: WeightedEnsemble) -> float:
    """``log mean(w 1)``: the self-normalizing denominator, for diagnostics."""
    lw = np.where(ens.indicator, ens.log_weight, -np.inf)
    return float(logsumexp(lw) - math.log(ens.n))
