import math

import numpy as np
import pytest
from scipy import stats

from gibbs_lab.measure import (
    DegenerateEnsembleError, PreconditionError, TailQuery, TestFunction, build_ensemble,
    char_functional, chi2_tail_check, companion_factor, cutoff_inclusion_threshold,
    cutoff_inclusion_violations, dyadic_tail_audit, dyadic_tail_bound, exp_moment,
    gaussian_char_functional, moment_norm, normalizer_exact, normalizer_mc, region_masses,
    tail_probability,
)
from gibbs_lab.rng import SeedPath
from gibbs_lab.sampler import MeasureParams, mu_beta_amplitude
from gibbs_lab.wick import a_beta_closed_form


def _normalizer_product(beta, n_terms=2_000_000):
    """prod_n lam_n / (lam_n - 12 beta a) squared over n >= 1, with an integral tail."""
    shift = 12 * beta * a_beta_closed_form(beta)
    n = np.arange(1, n_terms + 1, dtype=np.float64)
    lam = 1 + 4 * math.pi ** 2 * beta * n * n
    head = -np.sum(np.log1p(-shift / lam))
    tail = shift / (4 * math.pi ** 2 * beta * n_terms)
    return math.exp(2 * (head + tail) / 2)


@pytest.mark.parametrize("beta", [1e-1, 1e-2, 1e-3])
def test_normalizer_closed_form_matches_product(beta):
    assert normalizer_exact(beta) == pytest.approx(_normalizer_product(beta), rel=1e-9)


def test_normalizer_limit_and_companion():
    assert normalizer_exact(1e-9) == pytest.approx(math.exp(1.5), rel=2e-3)
    assert companion_factor(1e-9) == pytest.approx(math.exp(-0.75), rel=2e-3)


def test_normalizer_mc_agrees():
    e = normalizer_mc(0.05, 512, 20000, SeedPath(3))
    assert e.within(normalizer_exact(0.05), 4)


@pytest.mark.parametrize("M", [1, 2, 7, 50, 128])
@pytest.mark.parametrize("k", [3.0, 4.0, 6.0])
def test_chi2_tail_against_scipy(M, k):
    R = k * math.sqrt(M)
    c = chi2_tail_check(M, R)
    ref = stats.chi2.logsf(R * R, M)
    if np.isfinite(ref):
        assert c.log_exact == pytest.approx(ref, rel=1e-8)
    assert c.holds
    exact, bound = c
    assert exact <= bound or exact == 0.0


def test_chi2_deep_tail_stays_finite():
    c = chi2_tail_check(128, 6 * math.sqrt(128))
    assert math.isfinite(c.log_exact) and c.log_exact < -1000


def test_chi2_precondition():
    with pytest.raises(PreconditionError):
        chi2_tail_check(16, 2.0)


def test_char_functional_zero_is_one():
    ens = build_ensemble(MeasureParams(0.1, 32), 500, SeedPath(1))
    e = char_functional(ens, TestFunction(np.zeros(4)))
    assert e.value == 1 and e.stderr == 0


def test_unweighted_char_functional_matches_gaussian():
    beta, N = 0.05, 64
    ens = build_ensemble(MeasureParams(beta, N, power_p=4), 20000, SeedPath(2))
    f = TestFunction.from_modes({1: 0.6, 3: 0.8j})
    unweighted = ens.reweighted(ens.params).__class__(
        ens.params, ens.seed, ens.stream, ens.n, ens.table, np.zeros(ens.n), np.ones(ens.n, bool))
    e = char_functional(unweighted, f)
    assert e.within(gaussian_char_functional(f, mu_beta_amplitude(beta, N)), 4)


def test_pairings_beyond_stored_modes_regenerate_consistently():
    ens = build_ensemble(MeasureParams(0.1, 64), 300, SeedPath(4), n_low=4)
    ens_full = build_ensemble(MeasureParams(0.1, 64), 300, SeedPath(4), n_low=16)
    f = TestFunction.from_modes({10: 1.0})
    assert char_functional(ens, f).value == pytest.approx(char_functional(ens_full, f).value, abs=1e-12)


def test_ensembles_are_reproducible_and_prefix_consistent():
    p = MeasureParams(0.05, 64)
    a = build_ensemble(p, 1000, SeedPath(9))
    b = build_ensemble(p, 600, SeedPath(9))
    assert np.array_equal(a.table["int_u4"][:600], b.table["int_u4"])
    f, g = a[5]
    assert np.allclose(f.coeffs, a.field(5).coeffs)


def test_worker_count_does_not_change_results():
    p = MeasureParams(0.05, 64)
    a = build_ensemble(p, 700, SeedPath(12), workers=1)
    b = build_ensemble(p, 700, SeedPath(12), workers=2)
    assert np.array_equal(a.table["int_u4"], b.table["int_u4"])


def test_empty_cutoff_is_reported():
    with pytest.raises(DegenerateEnsembleError):
        build_ensemble(MeasureParams(1.0, 64, cutoff_K=1e-3), 50, SeedPath(1))


def test_tail_probability_and_zero_hits():
    p = MeasureParams(0.05, 64)
    e = tail_probability(p, TailQuery(1e6), 500, SeedPath(1))
    assert e.value == 0 and e.upper_bound == pytest.approx(-math.log(0.05) / 500)
    with pytest.raises(ValueError):
        TailQuery(0.0)


def test_moment_norm_of_gaussian():
    x = np.random.default_rng(0).normal(size=100_000)
    e = moment_norm(x, 4)
    assert e.within(3 ** 0.25, 4)


def test_exp_moment_r0_is_acceptance_fraction():
    p = MeasureParams(0.05, 64)
    e = exp_moment(p, 0.0, 2000, SeedPath(5))
    ens = build_ensemble(p, 2000, SeedPath(5))
    assert e.value == pytest.approx(ens.acceptance_fraction)


def test_dyadic_bound_dominates_estimate():
    p = MeasureParams(0.01, 512)
    rep = dyadic_tail_audit(p, 128, 4, 1e-4, 400, SeedPath(6))
    assert rep.block_norm_max_error < 1e-12
    assert rep.passes
    assert dyadic_tail_bound(0.01, 512, 128, 4, 1e-4) <= 1.0
    with pytest.raises(PreconditionError):
        dyadic_tail_audit(p, 16, 4, 1e-4, 10, SeedPath(6))


def test_cutoff_inclusion_below_threshold():
    K, c = 1.0, 4.0
    beta = cutoff_inclusion_threshold(K, c) * 0.5
    ens = build_ensemble(MeasureParams(beta, 256, cutoff_K=K), 300, SeedPath(1))
    assert cutoff_inclusion_violations(ens, c) == 0
    with pytest.raises(PreconditionError):
        cutoff_inclusion_threshold(0.4, c)


def test_region_masses_obey_chebyshev():
    ens = build_ensemble(MeasureParams(0.01, 256), 4000, SeedPath(8))
    for r in region_masses(ens):
        assert r.mass.value <= r.chebyshev_constant / r.const_N ** 2 + 3 * r.mass.stderr


def test_test_function_normalization():
    f = TestFunction.from_modes({2: 3.0, 5: 4.0j})
    assert f.norm_sq == pytest.approx(1.0)
    assert f.support == 5


def test_focusing_acceptance_fraction_at_small_beta():
    ens = build_ensemble(MeasureParams(1e-3, 2048), 2000, SeedPath(14))
    assert ens.acceptance_fraction >= 0.5


def test_defocusing_weights_are_at_most_one():
    from gibbs_lab.measure import defocusing_ess_fraction
    ens = build_ensemble(MeasureParams(1e-2, 256, power_p=4, sign=-1), 2000, SeedPath(15))
    assert np.all(ens.log_weight <= 0) and ens.indicator.all()
    assert defocusing_ess_fraction(ens) > 0.5
