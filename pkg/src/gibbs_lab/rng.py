"""Counter-based Gaussian streams.

Every draw is addressed by ``(seed, stream, index)``.  The Philox key is
``(seed, stream)`` and ``index`` occupies the third 64-bit counter word, so
draw ``index`` never depends on which other indices were generated, by whom,
or in what order.  Standard normals come out interleaved as
``Re g_1, Im g_1, Re g_2, ...``; a draw with N modes is therefore a prefix
of the same draw with 2N modes, which couples truncation levels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GaussianVector", "SeedPath", "draw_gaussians", "gaussian_block", "generator"]

_MASK64 = (1 << 64) - 1
_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class SeedPath:
    seed: int
    stream: int = 0
    index: int = 0

    def __post_init__(self):
        for name in ("seed", "stream", "index"):
            v = getattr(self, name)
            if not 0 <= v <= _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")

    def at(self, index: int) -> "SeedPath":
        return SeedPath(self.seed, self.stream, index)


def generator(path: SeedPath) -> np.random.Generator:
    bitgen = np.random.Philox(key=np.array([path.seed, path.stream], dtype=np.uint64),
                              counter=np.array([0, 0, path.index, 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


@dataclass(frozen=True)
class GaussianVector:
    """Standard complex Gaussians g_1..g_N (E|g|^2 = 1, Re/Im variance 1/2)."""

    entries: np.ndarray
    seed_path: SeedPath | None = None

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.complex128, copy=True)
        if e.ndim != 1:
            raise ValueError("entries must be 1-d")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return self.entries.size

    def __neg__(self) -> "GaussianVector":
        return GaussianVector(-self.entries, self.seed_path)


def _draw(path: SeedPath, n: int) -> np.ndarray:
    z = generator(path).standard_normal(2 * n)
    return z.view(np.complex128) * _HALF


def draw_gaussians(n: int, path: SeedPath) -> GaussianVector:
    if n < 1:
        raise ValueError("n must be positive")
    return GaussianVector(_draw(path, n), path)


def gaussian_block(n_modes: int, seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Rows ``index = start .. start+count-1`` as a ``(count, n_modes)`` array."""
    out = np.empty((count, n_modes), dtype=np.complex128)
    for k in range(count):
        out[k] = _draw(SeedPath(seed, stream, start + k), n_modes)
    return out
