import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbs_lab.oracles import enumerate_functionals
from gibbs_lab.rng import SeedPath, draw_gaussians, gaussian_block
from gibbs_lab.sampler import MeasureParams
from gibbs_lab.wick import (
    LIMIT_B0, LIMIT_C0, a_beta_closed_form, batch_functionals, constants, exact_F_second_moment,
    exact_wick_u4_second_moment, limit_constants, moment_checks, spectral_sum, wick_report,
)

KEYS = ("int_u2", "int_u4", "wick_u2", "wick_u4", "I1", "I2", "II_a", "II_b", "II_c")


def _lam(beta, n):
    return 1 + 4 * math.pi ** 2 * beta * n * n


@pytest.mark.parametrize("beta", [1.0, 1e-2, 1e-4])
def test_a_beta_closed_form_against_mpmath_series(beta):
    mpmath.mp.dps = 30
    series = 2 * mpmath.nsum(lambda n: 1 / (1 + 4 * mpmath.pi ** 2 * beta * n ** 2), [1, mpmath.inf])
    assert a_beta_closed_form(beta) == pytest.approx(float(series), rel=1e-12)
    assert spectral_sum(beta, 1) == pytest.approx(float(series), rel=1e-12)


def test_truncated_sums_against_fsum():
    beta, N = 0.003, 500
    for k in (1, 2, 4):
        direct = math.fsum(2 / _lam(beta, n) ** k for n in range(1, N + 1))
        assert spectral_sum(beta, k, N) == pytest.approx(direct, rel=1e-14)


def test_small_beta_limits():
    b0, c0 = limit_constants()
    assert b0 == pytest.approx(LIMIT_B0, rel=1e-10)
    assert c0 == pytest.approx(LIMIT_C0, rel=1e-10)
    k = constants(1e-8)
    assert math.sqrt(1e-8) * k.b_beta == pytest.approx(LIMIT_B0, rel=1e-3)
    assert math.sqrt(1e-8) * k.a_beta == pytest.approx(0.5, abs=1e-3)


@given(st.integers(1, 8), st.sampled_from([1.0, 0.1, 1e-3]), st.integers(0, 2 ** 32))
@settings(max_examples=40, deadline=None)
def test_functionals_match_enumeration(N, beta, seed):
    g = draw_gaussians(N, SeedPath(seed)).entries
    e = enumerate_functionals(g, beta)
    d = batch_functionals(g[None, :], beta)
    scale4 = max(abs(e["int_u4"]), abs(e["wick_u4"]))
    for k in KEYS:
        scale = abs(e["int_u2"]) if k in ("int_u2", "wick_u2") else scale4
        assert abs(d[k][0] - e[k]) <= 1e-9 * scale, k


@given(st.integers(1, 12), st.integers(0, 2 ** 32))
@settings(max_examples=30, deadline=None)
def test_decomposition_identity(N, seed):
    r = wick_report(draw_gaussians(N, SeedPath(seed)), MeasureParams(0.05, N))
    assert r.decomposition_residual() <= 1e-12


@pytest.mark.parametrize("N", [5, 16, 40])
def test_direct_sums_agree_with_fft(N):
    g = draw_gaussians(N, SeedPath(3))
    fast = wick_report(g, MeasureParams(0.02, N), M=N // 2)
    slow = wick_report(g, MeasureParams(0.02, N), M=N // 2, direct=True)
    assert slow.II_a == pytest.approx(fast.II_a, rel=1e-10, abs=1e-10 * abs(fast.int_u4))
    assert slow.II_b == pytest.approx(fast.II_b, rel=1e-10, abs=1e-10 * abs(fast.int_u4))
    assert slow.F_beta_M == pytest.approx(fast.F_beta_M, rel=1e-10, abs=1e-12)


def _brute_second_moments(beta, N):
    idx = [n for n in range(-N, N + 1) if n]
    full = distinct = 0.0
    for q in itertools.product(idx, repeat=3):
        n4 = -sum(q)
        if n4 == 0 or abs(n4) > N:
            continue
        w = 1.0
        for n in q + (n4,):
            w /= _lam(beta, n)
        full += w
        if len({abs(n) for n in q + (n4,)}) == 4:
            distinct += w
    return 24 * full, 24 * beta ** 2 * distinct


@pytest.mark.parametrize("N", [2, 3, 6, 9])
def test_exact_second_moments_against_brute_force(N):
    beta = 0.05
    u4, F = _brute_second_moments(beta, N)
    assert exact_wick_u4_second_moment(beta, N) == pytest.approx(u4, rel=1e-12)
    assert exact_F_second_moment(beta, N) == pytest.approx(F, rel=1e-12, abs=1e-14 * beta ** 2 * u4)


def test_moment_checks_on_small_ensemble():
    beta, N = 0.05, 32
    d = batch_functionals(gaussian_block(N, 17, 0, 0, 20000), beta)
    m = moment_checks(d["wick_u2"], d["wick_u4"], beta, N)
    assert m.mean_wick_u2.within(0.0, 4)
    assert m.mean_wick_u4.within(0.0, 4)
    assert m.var_wick_u2.within(m.target_var_wick_u2, 4)


def test_second_moment_estimate_converges_to_exact():
    # heavy-tailed statistic (eighth Gaussian moment), so use a long run at small N
    beta, N = 0.05, 8
    w4 = np.concatenate([batch_functionals(gaussian_block(N, 21, 0, s, 50000), beta)["wick_u4"]
                         for s in range(0, 200000, 50000)])
    m = moment_checks(np.zeros_like(w4), w4, beta, N)
    assert m.scaled_second_moment_u4.within(beta ** 1.5 * exact_wick_u4_second_moment(beta, N), 4)


def test_wick_report_rejects_bad_input():
    with pytest.raises(ValueError):
        wick_report(np.ones(4), MeasureParams(0.1, 5))
    with pytest.raises(ValueError):
        wick_report(np.ones(100), MeasureParams(0.1, 100), direct=True)
