"""Truncated mean-zero real fields on the circle T = R/Z.

A field is stored by its positive-frequency Fourier coefficients
``c[n-1] = u_hat(n)`` for ``n = 1..N``; the negative half is the complex
conjugate and the zero mode is absent, so every stored field is real and
has mean zero by construction.

Batch helpers (``batch_*``) act on coefficient arrays of shape ``(..., N)``
and are what the ensemble code uses; the ``SpectralField`` methods are thin
wrappers over them.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field as dc_field
from typing import Iterable

import numpy as np
from scipy import fft

__all__ = [
    "AliasingError",
    "DyadicSpec",
    "GridField",
    "SobolevIndex",
    "SpectralField",
    "analyze",
    "batch_l2_norm_sq",
    "batch_lp_integral",
    "batch_synthesize",
    "dyadic_blocks",
    "field_from_record",
    "field_to_record",
    "l2_norm_sq",
    "lp_integral",
    "quadrature_grid_size",
    "project",
    "sobolev_norm_sq",
    "synthesize",
]


class AliasingError(ValueError):
    """Grid too coarse to represent the requested trigonometric polynomial."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralField:
    """Real mean-zero trigonometric polynomial of degree ``n_modes``."""

    coeffs: np.ndarray
    beta_tag: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a non-empty 1-d sequence")
        if self.beta_tag < 0:
            raise ValueError("beta_tag must be nonnegative")
        object.__setattr__(self, "coeffs", _frozen(c))

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(cls, n_modes: int, beta_tag: float = 0.0) -> "SpectralField":
        return cls(np.zeros(n_modes, dtype=np.complex128), beta_tag)

    @classmethod
    def from_modes(cls, modes: dict[int, complex], n_modes: int,
                   beta_tag: float = 0.0) -> "SpectralField":
        """Build a field from ``{n: u_hat(n)}`` with ``1 <= n <= n_modes``."""
        c = np.zeros(n_modes, dtype=np.complex128)
        for n, v in modes.items():
            if not 1 <= n <= n_modes:
                raise ValueError(f"mode {n} outside 1..{n_modes}")
            c[n - 1] = v
        return cls(c, beta_tag)

    def coefficient(self, n: int) -> complex:
        """u_hat(n) for any integer n, using Hermitian symmetry."""
        if n == 0 or abs(n) > self.n_modes:
            return 0j
        c = self.coeffs[abs(n) - 1]
        return complex(c if n > 0 else np.conj(c))

    def padded(self, n_modes: int) -> "SpectralField":
        """Same field viewed with a larger truncation."""
        if n_modes < self.n_modes:
            raise ValueError("padded() cannot shrink; use project()")
        c = np.zeros(n_modes, dtype=np.complex128)
        c[: self.n_modes] = self.coeffs
        return SpectralField(c, self.beta_tag)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        if other.n_modes != self.n_modes:
            raise ValueError("fields must share n_modes")
        return SpectralField(self.coeffs + other.coeffs, self.beta_tag)


@dataclass(frozen=True)
class GridField:
    """Values ``u(j/G)``, ``j = 0..G-1``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty 1-d sequence")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def grid_size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SobolevIndex:
    s: float

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ValueError("Sobolev index must be finite")


@dataclass(frozen=True)
class DyadicSpec:
    """Dyadic frequency scale ``M_j = 2**j * base``."""

    base: int
    level: int = 0

    def __post_init__(self):
        if self.base < 1:
            raise ValueError("base M must be >= 1")
        if self.level < 0:
            raise ValueError("level j must be >= 0")

    @property
    def scale(self) -> int:
        return (2 ** self.level) * self.base

    def block(self) -> tuple[int, int]:
        """Half-open range ``(M_{j-1}, M_j]`` as ``(lo, hi)``; level 0 is ``(0, M]``."""
        if self.level == 0:
            return 0, self.base
        return (2 ** (self.level - 1)) * self.base, self.scale


# ----------------------------------------------------------------- transforms

def quadrature_grid_size(n_modes: int, degree: int) -> int:
    """Smallest fast (5-smooth) G with ``G >= degree * n_modes + 1``.

    A grid of that size integrates any trigonometric polynomial of degree
    ``degree * n_modes`` exactly.
    """
    return fft.next_fast_len(degree * n_modes + 1, real=True)


def batch_synthesize(coeffs: np.ndarray, grid_size: int) -> np.ndarray:
    """Grid values for an array of coefficient rows, shape ``(..., G)``."""
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[-1]
    if grid_size < 2 * n + 1:
        raise AliasingError(f"grid_size={grid_size} < 2*N+1={2 * n + 1}")
    spec = np.zeros(coeffs.shape[:-1] + (grid_size // 2 + 1,), dtype=np.complex128)
    spec[..., 1: n + 1] = coeffs
    return fft.irfft(spec, n=grid_size, axis=-1, norm="forward")


def synthesize(field: SpectralField, grid_size: int) -> GridField:
    return GridField(batch_synthesize(field.coeffs, grid_size))


def analyze(grid: GridField, n_modes: int, beta_tag: float = 0.0) -> SpectralField:
    """Inverse of ``synthesize``; exact when ``G >= 2 N + 1``."""
    g = grid.grid_size
    if g < 2 * n_modes + 1:
        raise AliasingError(f"grid_size={g} < 2*N+1={2 * n_modes + 1}")
    spec = fft.rfft(grid.values, norm="forward")
    return SpectralField(spec[1: n_modes + 1], beta_tag)


# ---------------------------------------------------------------------- norms

def batch_l2_norm_sq(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs)
    return 2.0 * np.sum(c.real ** 2 + c.imag ** 2, axis=-1)


def l2_norm_sq(field: SpectralField) -> float:
    """``int_T u^2 = 2 sum_{n>=1} |c_n|^2`` (Parseval)."""
    return float(batch_l2_norm_sq(field.coeffs))


def batch_lp_integral(coeffs: np.ndarray, p: int) -> np.ndarray:
    if p not in (3, 4):
        raise ValueError("p must be 3 or 4")
    coeffs = np.asarray(coeffs)
    g = quadrature_grid_size(coeffs.shape[-1], p)
    u = batch_synthesize(coeffs, g)
    return np.mean(u ** p, axis=-1)


def lp_integral(field: SpectralField, p: int) -> float:
    """``int_T u^p`` for p in {3, 4}, exact up to round-off."""
    return float(batch_lp_integral(field.coeffs, p))


def sobolev_norm_sq(field: SpectralField, s: SobolevIndex | float) -> float:
    s = s.s if isinstance(s, SobolevIndex) else float(s)
    n = np.arange(1, field.n_modes + 1, dtype=np.float64)
    c = field.coeffs
    return float(2.0 * np.sum(n ** (2.0 * s) * (c.real ** 2 + c.imag ** 2)))


# ---------------------------------------------------------------- projections

def project(field: SpectralField, kind: str, M: int, level: int | None = None) -> SpectralField:
    """Dirichlet projection.

    ``kind`` is ``"above"`` (|n| > M), ``"at_or_below"`` (|n| <= M) or
    ``"block"`` (M_{j-1} < |n| <= M_j with ``M_j = 2**level * M``).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    n = np.arange(1, field.n_modes + 1)
    if kind == "above":
        keep = n > M
    elif kind == "at_or_below":
        keep = n <= M
    elif kind == "block":
        if level is None or level < 1:
            raise ValueError("block projection needs level >= 1")
        lo, hi = DyadicSpec(M, level).block()
        keep = (n > lo) & (n <= hi)
    else:
        raise ValueError(f"unknown projection kind {kind!r}")
    return SpectralField(np.where(keep, field.coeffs, 0), field.beta_tag)


def dyadic_blocks(n_modes: int, M: int) -> list[int]:
    """Levels j = 1..ceil(log2(N/M)) whose blocks tile ``M < |n| <= N``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if M >= n_modes:
        return []
    return list(range(1, math.ceil(math.log2(n_modes / M)) + 1))


# -------------------------------------------------------------- serialization

def field_to_record(field: SpectralField) -> str:
    """Columnar text record: ``N`` on the first data line, then ``n Re Im`` rows."""
    out = io.StringIO()
    out.write(f"# beta_tag={float(field.beta_tag)!r}\n")
    out.write(f"{field.n_modes}\n")
    for n, c in enumerate(field.coeffs, start=1):
        out.write(f"{n} {float(c.real)!r} {float(c.imag)!r}\n")
    return out.getvalue()


def field_from_record(text: str | Iterable[str]) -> SpectralField:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    beta_tag = 0.0
    rows = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "beta_tag":
                beta_tag = float(val)
            continue
        rows.append(line.split())
    if not rows or len(rows[0]) != 1:
        raise ValueError("record must start with the mode count N")
    n_modes = int(rows[0][0])
    if len(rows) - 1 != n_modes:
        raise ValueError(f"expected {n_modes} coefficient rows, got {len(rows) - 1}")
    c = np.zeros(n_modes, dtype=np.complex128)
    for k, row in enumerate(rows[1:], start=1):
        n, re, im = int(row[0]), float(row[1]), float(row[2])
        if n != k:
            raise ValueError(f"row {k} has mode index {n}")
        c[n - 1] = complex(re, im)
    return SpectralField(c, beta_tag)
