"""Spectral constants and Wick-ordered degree 2 and 4 functionals.

Under mu_beta the coefficients are ``X_n = g_n / sqrt(lam_n)`` with
``lam_n = 1 + bt n^2``.  With ``a = sum_{n != 0} 1/lam_n``:

    :u^2:  = u^2 - a
    :u^4:  = u^4 - 6 a u^2 + 3 a^2
    int :u^4: = 12 I1 - 6 I2 + II_a + II_b + II_c

where I1 = (sum_{n>=1} (|g_n|^2 - 1)/lam_n)^2, I2 = sum_{n>=1} |X_n|^4 and the
II parts collect the index quadruples (n1+n2+n3+n4 = 0, no n_j = -n_k) with
all n_j distinct (a), exactly two equal (b), three equal (c).

II_c and II_b are evaluated directly, II_b through the Fourier coefficients
of u^2 (``C_k = sum_m X_m X_{k-m}``), and II_a by subtraction:

    II_a = int u^4 - 3 (int u^2)^2 + 6 I2 - II_b - II_c

which does not involve ``a`` at all.  ``direct=True`` evaluates II_b by its
O(N^2) index sum and II_a by the O(N^3) one (N <= 64).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import fft, integrate

from .field import quadrature_grid_size
from .rng import GaussianVector
from .sampler import MeasureParams
from .stats import Estimate, mean_estimate

__all__ = [
    "LIMIT_B0",
    "LIMIT_C0",
    "MomentReport",
    "SpectralConstants",
    "WickReport",
    "a_beta_closed_form",
    "batch_functionals",
    "constants",
    "direct_II_a",
    "direct_II_b",
    "exact_F_second_moment",
    "exact_wick_u4_second_moment",
    "limit_constants",
    "moment_checks",
    "spectral_sum",
    "wick_report",
]

DIRECT_MAX_MODES = 64


# ----------------------------------------------------------------- constants

def _tail_integral(bt: float, x0: float, k: int) -> float:
    """``int_{x0}^inf (1 + bt x^2)^{-k} dx`` for ``bt x0^2 >= 1e4``.

    With ``t = 1/(sqrt(bt) x)`` the integrand is ``t^{2k-2}(1+t^2)^{-k}``,
    expanded as a binomial series in t^2.
    """
    t0 = 1.0 / (math.sqrt(bt) * x0)
    total, coef, j = 0.0, 1.0, 0
    while True:
        e = 2 * k - 1 + 2 * j
        term = coef * t0 ** e / e
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
        coef *= -(k + j) / (j + 1)
        j += 1
    return total / math.sqrt(bt)


def spectral_sum(beta: float, k: int, n_modes: int | None = None) -> float:
    """``sum_{0<|n|<=N} (1 + bt n^2)^{-k}``; ``n_modes=None`` sums to infinity.

    Finite sums use compensated summation.  The infinite sum adds to a long
    compensated head an Euler-Maclaurin tail (integral, endpoint and first
    derivative corrections) whose neglected remainder is far below 1e-14.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    bt = 4.0 * math.pi ** 2 * beta
    if n_modes is not None:
        n = np.arange(1, n_modes + 1, dtype=np.float64)
        return 2.0 * math.fsum((1.0 + bt * n * n) ** (-k))
    n0 = int(max(1000, math.ceil(100.0 / math.sqrt(bt))))
    n = np.arange(1, n0 + 1, dtype=np.float64)
    head = math.fsum((1.0 + bt * n * n) ** (-k))
    f0 = (1.0 + bt * n0 * n0) ** (-k)
    df0 = -2.0 * k * bt * n0 * (1.0 + bt * n0 * n0) ** (-k - 1)
    tail = _tail_integral(bt, n0, k) - 0.5 * f0 - df0 / 12.0
    return 2.0 * (head + tail)


def a_beta_closed_form(beta: float) -> float:
    """``a_beta(inf) = x coth(x) - 1`` with ``x = pi / sqrt(bt)``."""
    x = math.pi / math.sqrt(4.0 * math.pi ** 2 * beta)
    return x / math.tanh(x) - 1.0


@dataclass(frozen=True)
class SpectralConstants:
    beta: float
    n_modes: int | None  # None means the untruncated sums
    a_beta: float
    b_beta: float
    c_beta: float


def constants(beta: float, n_modes: int | None = None) -> SpectralConstants:
    if beta <= 0:
        raise ValueError("beta must be positive")
    if n_modes is None or n_modes == math.inf:
        return SpectralConstants(beta, None, a_beta_closed_form(beta),
                                 spectral_sum(beta, 2), spectral_sum(beta, 4))
    n_modes = int(n_modes)
    return SpectralConstants(beta, n_modes, spectral_sum(beta, 1, n_modes),
                             spectral_sum(beta, 2, n_modes), spectral_sum(beta, 4, n_modes))


def limit_constants() -> tuple[float, float]:
    """Small-beta limits of ``beta^{1/2} b_beta`` and ``beta^{1/2} c_beta`` by quadrature."""
    out = []
    for k in (2, 4):
        val, _ = integrate.quad(lambda x: (1.0 + 4.0 * math.pi ** 2 * x * x) ** (-k), 0, np.inf,
                                epsabs=1e-15, epsrel=1e-13)
        out.append(2.0 * val)
    return out[0], out[1]


LIMIT_B0 = 0.25        # 2 int_0^inf (1 + 4 pi^2 x^2)^-2 dx
LIMIT_C0 = 5.0 / 32.0  # 2 int_0^inf (1 + 4 pi^2 x^2)^-4 dx


# --------------------------------------------------------- per-sample kernels

WICK_FIELDS = ("int_u2", "wick_u2", "int_u4", "wick_u4", "I1", "I2", "II_a", "II_b", "II_c",
               "F_beta_M")


@dataclass(frozen=True)
class WickReport:
    int_u2: float
    wick_u2: float
    int_u4: float
    wick_u4: float
    I1: float
    I2: float
    II_a: float
    II_b: float
    II_c: float
    F_beta_M: float | None = None

    def decomposition_residual(self) -> float:
        """Relative mismatch of ``wick_u4`` and ``12 I1 - 6 I2 + II``."""
        parts = (12 * self.I1, -6 * self.I2, self.II_a, self.II_b, self.II_c)
        scale = max(abs(self.wick_u4), sum(abs(p) for p in parts), 1e-300)
        return abs(self.wick_u4 - math.fsum(parts)) / scale

    def csv_row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


def _lam(beta: float, n_modes: int) -> np.ndarray:
    n = np.arange(1, n_modes + 1, dtype=np.float64)
    return 1.0 + 4.0 * math.pi ** 2 * beta * n * n


def _pair_free_parts(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """II_b and II_c from coefficients ``X`` (b, N) and ``C_k`` for k = 0..2N."""
    b, N = X.shape
    X3 = np.zeros_like(X)
    m = N // 3
    X3[:, :m] = X[:, 2:3 * m:3]  # X_{3n}, zero once 3n > N
    C2 = C[:, 2:2 * N + 1:2]      # C_{2n}
    Xsq = X * X
    II_b = 12.0 * np.sum((Xsq * (np.conj(C2) - 2.0 * X * np.conj(X3) - np.conj(Xsq))).real, axis=1)
    II_c = 8.0 * np.sum((Xsq * X * np.conj(X3)).real, axis=1)
    return II_b, II_c


def _core(X: np.ndarray, want_u3: bool = False):
    b, N = X.shape
    G = quadrature_grid_size(N, 4)
    spec = np.zeros((b, G // 2 + 1), dtype=np.complex128)
    spec[:, 1: N + 1] = X
    u = fft.irfft(spec, n=G, axis=1, norm="forward")
    u2 = u * u
    int_u4 = np.mean(u2 * u2, axis=1)
    int_u3 = np.mean(u2 * u, axis=1) if want_u3 else None
    C = fft.rfft(u2, axis=1, norm="forward")[:, : 2 * N + 1]
    absX2 = X.real ** 2 + X.imag ** 2
    int_u2 = 2.0 * np.sum(absX2, axis=1)
    I2 = np.sum(absX2 * absX2, axis=1)
    II_b, II_c = _pair_free_parts(X, C)
    II_a = int_u4 - 3.0 * int_u2 ** 2 + 6.0 * I2 - II_b - II_c
    return int_u2, int_u3, int_u4, I2, II_a, II_b, II_c


def batch_functionals(g: np.ndarray, beta: float, M: int | None = None,
                      a_beta: float | None = None, n_low: int = 0,
                      amplitude: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """All per-sample functionals for Gaussian rows ``g`` of shape (b, N).

    ``a_beta`` defaults to the truncated ``a_beta(N)``, the exact mu_beta
    mean of ``int u^2`` at this truncation.  ``amplitude`` overrides the
    mu_beta spectral amplitude (for other Gaussian measures); the Wick
    parts are then those of the overriding measure's coefficients with the
    supplied ``a_beta``.
    """
    g = np.atleast_2d(np.asarray(g, dtype=np.complex128))
    b, N = g.shape
    lam = _lam(beta, N)
    amp = lam ** -0.5 if amplitude is None else np.asarray(amplitude, dtype=np.float64)
    X = g * amp
    if a_beta is None:
        a_beta = spectral_sum(beta, 1, N)
    int_u2, int_u3, int_u4, I2, II_a, II_b, II_c = _core(X, want_u3=True)
    s = np.sum((g.real ** 2 + g.imag ** 2 - 1.0) * amp ** 2, axis=1)
    out = {
        "int_u2": int_u2,
        "int_u3": int_u3,
        "int_u4": int_u4,
        "wick_u2": int_u2 - a_beta,
        "wick_u4": int_u4 - 6.0 * a_beta * int_u2 + 3.0 * a_beta ** 2,
        "I1": s * s,
        "I2": I2,
        "II_a": II_a,
        "II_b": II_b,
        "II_c": II_c,
    }
    if M is not None:
        if not 1 <= M <= N:
            raise ValueError(f"M must lie in 1..{N}")
        II_a_M = II_a if M == N else _core(X[:, :M])[4]
        out["F_beta_M"] = beta * II_a_M
    if n_low:
        out["low"] = X[:, :n_low].copy()
    return out


def wick_report(g: GaussianVector | np.ndarray, params: MeasureParams, M: int | None = None,
                direct: bool = False) -> WickReport:
    """Wick functionals of the mu_beta sample driven by ``g``."""
    entries = g.entries if isinstance(g, GaussianVector) else np.asarray(g)
    if entries.ndim != 1 or entries.size != params.n_modes:
        raise ValueError(f"g has length {entries.size}, params.n_modes = {params.n_modes}")
    if params.beta <= 0:
        raise ValueError("Wick ordering needs beta > 0")
    d = batch_functionals(entries[None, :], params.beta, M=M)
    if direct:
        if params.n_modes > DIRECT_MAX_MODES:
            raise ValueError(f"direct summation is limited to N <= {DIRECT_MAX_MODES}")
        X = entries * _lam(params.beta, params.n_modes) ** -0.5
        d["II_b"] = np.array([direct_II_b(X)])
        d["II_a"] = np.array([direct_II_a(X)])
        if M is not None:
            d["F_beta_M"] = np.array([params.beta * direct_II_a(X[:M])])
    vals = {k: float(d[k][0]) for k in WICK_FIELDS if k in d}
    return WickReport(**vals)


# ------------------------------------------------------- direct index sums

def _two_sided(X: np.ndarray) -> tuple[np.ndarray, int]:
    N = X.size
    full = np.zeros(2 * N + 1, dtype=np.complex128)
    full[N + 1:] = X
    full[:N] = np.conj(X[::-1])
    return full, N


def direct_II_b(X: np.ndarray) -> float:
    """O(N^2) sum over ordered quadruples with exactly two equal indices."""
    full, N = _two_sided(np.asarray(X, dtype=np.complex128))
    idx = np.arange(-N, N + 1)
    total = 0.0 + 0.0j
    for n in idx:
        if n == 0:
            continue
        m = idx[idx != 0]
        r = -2 * n - m
        ok = (np.abs(r) <= N) & (r != 0) & (m != n) & (m != -n) & (r != n)
        total += full[n + N] ** 2 * np.sum(full[m[ok] + N] * full[r[ok] + N])
    return float((6.0 * total).real)


def direct_II_a(X: np.ndarray) -> float:
    """O(N^3) sum over ordered quadruples with pairwise distinct |n_j|."""
    full, N = _two_sided(np.asarray(X, dtype=np.complex128))
    idx = np.arange(-N, N + 1)
    idx = idx[idx != 0]
    n2, n3 = np.meshgrid(idx, idx, indexing="ij")
    total = 0.0 + 0.0j
    for n1 in idx:
        n4 = -(n1 + n2 + n3)
        a1, a2, a3, a4 = abs(n1), np.abs(n2), np.abs(n3), np.abs(n4)
        ok = ((a4 >= 1) & (a4 <= N) & (a1 != a2) & (a1 != a3) & (a1 != a4)
              & (a2 != a3) & (a2 != a4) & (a3 != a4))
        total += full[n1 + N] * np.sum(full[n2[ok] + N] * full[n3[ok] + N] * full[n4[ok] + N])
    return float(total.real)


def exact_wick_u4_second_moment(beta: float, n_modes: int) -> float:
    """``E[(int :u^4:)^2] = 24 sum_{n1+..+n4=0} prod_j 1/lam_{n_j}`` (all four-tuples of nonzero modes)."""
    w = 1.0 / _lam(beta, n_modes)
    W = np.concatenate([w[::-1], [0.0], w])
    A = np.convolve(W, W)
    return 24.0 * math.fsum(A * A)


def exact_F_second_moment(beta: float, M: int) -> float:
    """``E[F_{beta,M}^2] = 24 beta^2 sum_a prod_j 1/lam_{n_j}``.

    The all-distinct sum is reached by inclusion-exclusion from the full
    quadruple sum ``sum_k A_k^2`` with ``A = w * w`` (two-sided weights
    ``w_n = 1/lam_n``), minus the pair, two-equal and three-equal patterns.
    """
    w = 1.0 / _lam(beta, M)
    W = np.concatenate([w[::-1], [0.0], w])
    A = np.convolve(W, W)  # index k + 2M for k = -2M..2M
    s_full = math.fsum(A * A)
    w2 = 2.0 * math.fsum(w ** 2)
    w4 = 2.0 * math.fsum(w ** 4)
    s_nopair = s_full - 3.0 * w2 ** 2 + 3.0 * w4
    w3n = np.zeros(M)
    m = M // 3
    w3n[:m] = w[2:3 * m:3]
    s_c = 8.0 * math.fsum(w ** 3 * w3n)
    A2n = A[2 * M + 2: 4 * M + 1: 2]
    s_b = 12.0 * math.fsum(w ** 2 * (A2n - 2.0 * w * w3n - w ** 2))
    s_a = s_nopair - s_b - s_c
    return 24.0 * beta ** 2 * s_a


# ------------------------------------------------------------ ensemble checks

@dataclass(frozen=True)
class MomentReport:
    mean_wick_u2: Estimate
    var_wick_u2: Estimate
    target_var_wick_u2: float
    mean_wick_u4: Estimate
    scaled_second_moment_u4: Estimate  # beta^{3/2} E[(int :u^4:)^2]


def moment_checks(wick_u2: np.ndarray, wick_u4: np.ndarray, beta: float, n_modes: int) -> MomentReport:
    wick_u2 = np.asarray(wick_u2)
    wick_u4 = np.asarray(wick_u4)
    n = wick_u2.size
    m2 = wick_u2.mean()
    dev = wick_u2 - m2
    var = float(np.mean(dev ** 2)) * n / (n - 1)
    var_se = float(np.sqrt(max(np.mean(dev ** 4) - var ** 2, 0.0) / n))
    sq = mean_estimate(beta ** 1.5 * wick_u4 ** 2)
    return MomentReport(
        mean_wick_u2=mean_estimate(wick_u2),
        var_wick_u2=Estimate(var, var_se, n, float(n)),
        target_var_wick_u2=2.0 * spectral_sum(beta, 2, n_modes),
        mean_wick_u4=mean_estimate(wick_u4),
        scaled_second_moment_u4=sq,
    )
