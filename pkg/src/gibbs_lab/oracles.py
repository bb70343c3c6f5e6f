"""Brute-force enumeration oracle for the degree-4 functionals (small N only).

Every ordered quadruple ``(n1, n2, n3, n4)`` of nonzero frequencies with
``|n_j| <= N`` and ``n1 + n2 + n3 + n4 = 0`` is visited and classified:

    paired   some n_j = -n_k
    a        |n_j| pairwise distinct
    b        exactly two n_j equal, no pairing
    c        three n_j equal

Nothing here reuses the FFT kernels of ``wick``.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = ["ENUMERATION_MAX_MODES", "enumerate_functionals"]

ENUMERATION_MAX_MODES = 16


def _classify(q: tuple[int, int, int, int]) -> str:
    for j, k in itertools.combinations(range(4), 2):
        if q[j] == -q[k]:
            return "paired"
    counts = sorted((q.count(v) for v in set(q)), reverse=True)
    if counts[0] == 3:
        return "c"
    if counts[0] == 2:
        return "b"
    return "a"


def enumerate_functionals(g: np.ndarray, beta: float, a_beta: float | None = None) -> dict[str, float]:
    """All degree-2/4 functionals of ``u_hat_n = g_n / sqrt(1 + bt n^2)`` by enumeration.

    ``a_beta`` defaults to the truncated ``sum_{0 < |n| <= N} 1/lam_n``.
    """
    g = np.asarray(g, dtype=np.complex128)
    N = g.size
    if N > ENUMERATION_MAX_MODES:
        raise ValueError(f"enumeration is limited to N <= {ENUMERATION_MAX_MODES}")
    bt = 4.0 * math.pi ** 2 * beta
    lam = {n: 1.0 + bt * n * n for n in range(1, N + 1)}
    coef = {}
    for n in range(1, N + 1):
        x = complex(g[n - 1]) / math.sqrt(lam[n])
        coef[n] = x
        coef[-n] = x.conjugate()
    if a_beta is None:
        a_beta = math.fsum(2.0 / lam[n] for n in range(1, N + 1))
    sums = {"paired": [], "a": [], "b": [], "c": []}
    idx = [n for n in range(-N, N + 1) if n]
    for n1, n2, n3 in itertools.product(idx, repeat=3):
        n4 = -(n1 + n2 + n3)
        if n4 == 0 or abs(n4) > N:
            continue
        q = (n1, n2, n3, n4)
        sums[_classify(q)].append(coef[n1] * coef[n2] * coef[n3] * coef[n4])
    part = {k: math.fsum(z.real for z in v) for k, v in sums.items()}
    int_u2 = math.fsum(2.0 * abs(coef[n]) ** 2 for n in range(1, N + 1))
    int_u4 = math.fsum(part.values())
    I1 = math.fsum((abs(complex(g[n - 1])) ** 2 - 1.0) / lam[n] for n in range(1, N + 1)) ** 2
    I2 = math.fsum(abs(coef[n]) ** 4 for n in range(1, N + 1))
    return {
        "int_u2": int_u2,
        "int_u4": int_u4,
        "wick_u2": int_u2 - a_beta,
        "wick_u4": int_u4 - 6.0 * a_beta * int_u2 + 3.0 * a_beta ** 2,
        "paired": part["paired"],
        "I1": I1,
        "I2": I2,
        "II_a": part["a"],
        "II_b": part["b"],
        "II_c": part["c"],
    }
