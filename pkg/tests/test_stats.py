import math
import warnings

import numpy as np
import pytest

from gibbs_lab.stats import (
    LowESSWarning, bootstrap_stderr, effective_sample_size, mean_estimate, weighted_mean,
)


def test_uniform_weights_reduce_to_plain_mean():
    x = np.random.default_rng(0).normal(size=500)
    w = weighted_mean(np.zeros(500), x)
    m = mean_estimate(x)
    assert w.value == pytest.approx(m.value)
    assert w.stderr == pytest.approx(m.stderr, rel=1e-2)
    assert w.ess == pytest.approx(500)


def test_ess_of_degenerate_weights():
    lw = np.array([0.0, -50.0, -50.0, -50.0])
    assert effective_sample_size(lw) == pytest.approx(1.0, rel=1e-12)
    mask = np.array([False, True, True, True])
    assert effective_sample_size(lw, mask) == pytest.approx(3.0)


def test_weighted_mean_matches_exact_reweighting():
    # reweight N(0,1) samples by exp(t x) -> N(t, 1)
    rng = np.random.default_rng(3)
    x = rng.normal(size=200_000)
    est = weighted_mean(0.5 * x, x)
    assert abs(est.value - 0.5) < 4 * est.stderr


def test_low_ess_warns():
    lw = np.array([0.0] + [-100.0] * 999)
    with pytest.warns(LowESSWarning):
        weighted_mean(lw, np.ones(1000))


def test_bootstrap_stderr_of_mean():
    x = np.random.default_rng(4).normal(size=2000)
    se = bootstrap_stderr(x, np.mean, 400, seed=1)
    assert se == pytest.approx(1 / math.sqrt(2000), rel=0.15)
