import math

import numpy as np
import pytest

from gibbs_lab.field import SpectralField, field_from_record, l2_norm_sq
from gibbs_lab.kdv import (
    FlowConfig, conservation_audit, dump_snapshots, evolve, evolve_batch, evolve_with_snapshots,
    invariance_experiment, invariant_log_weight, probe_functions, reversal_residual, stable_dt,
)
from gibbs_lab.rng import SeedPath, gaussian_block
from gibbs_lab.sampler import MeasureParams, mu_beta_amplitude, sample_mu_beta
from gibbs_lab.wick import batch_functionals, spectral_sum


def _soliton_coeffs(c, x0, N, G=4096):
    """Mean-removed KdV soliton -(c/2) sech^2(sqrt(c)/2 (x - x0)), periodized; also returns its mean."""
    d = (np.arange(G) / G - x0 + 0.5) % 1.0 - 0.5
    u = -(c / 2) / np.cosh(math.sqrt(c) / 2 * d) ** 2
    spec = np.fft.rfft(u, norm="forward")
    return spec[1: N + 1], spec[0].real


def test_soliton_translation():
    # u_t + u_xxx - 6 u u_x = 0; removing the mean m shifts the speed from c to c + 6 m
    c, N, t = 900.0, 64, 0.002
    c0, m = _soliton_coeffs(c, 0.3, N)
    out = evolve(SpectralField(c0), FlowConfig(N, 1.5e-6, t))
    exact, _ = _soliton_coeffs(c, 0.3 + (c + 6 * m) * t, N)
    assert np.linalg.norm(out.coeffs - exact) / np.linalg.norm(exact) < 2e-4


def test_linear_flow_is_exact_phase_rotation():
    u = sample_mu_beta(MeasureParams(0.01, 40), SeedPath(1))
    cfg = FlowConfig(40, 1e-3, 0.37, nonlinear=False)
    out = evolve(u, cfg)
    k = np.arange(1, 41)
    expected = u.coeffs * np.exp(1j * (2 * np.pi * k) ** 3 * 0.37)
    assert np.allclose(out.coeffs, expected, atol=1e-12)


@pytest.mark.parametrize("N", [8, 16, 32])
def test_direct_and_fft_backends_agree(N):
    c0 = gaussian_block(N, 4, 0, 0, 3) * mu_beta_amplitude(0.1, N)
    cfg = FlowConfig(N, 1e-4, 0.01)
    a, _ = evolve_batch(c0, cfg, backend="direct")
    b, _ = evolve_batch(c0, cfg, backend="fft")
    assert np.max(np.abs(a - b)) < 1e-11 * np.max(np.abs(c0))


def test_schemes_are_fourth_order_on_smooth_data():
    u = SpectralField.from_modes({1: 0.3, 2: 0.1j}, 8)
    ref = evolve(u, FlowConfig(8, 2.5e-5, 0.05)).coeffs
    errs = {}
    for scheme in ("rk4", "gauss4"):
        e1 = np.linalg.norm(evolve(u, FlowConfig(8, 4e-4, 0.05, scheme=scheme)).coeffs - ref)
        e2 = np.linalg.norm(evolve(u, FlowConfig(8, 2e-4, 0.05, scheme=scheme)).coeffs - ref)
        errs[scheme] = e1 / e2
    assert errs["rk4"] > 12 and errs["gauss4"] > 12


def test_l2_conservation_and_reversibility():
    u = sample_mu_beta(MeasureParams(1.0, 64), SeedPath(2))
    cfg = FlowConfig(64, 1e-4, 0.05)
    audit = conservation_audit(u, cfg)
    assert audit.mean_drift == 0.0
    assert audit.max_l2_drift_over_time < 1e-11
    assert reversal_residual(u, cfg) < 1e-10


def test_advective_limit_is_enforced():
    u = sample_mu_beta(MeasureParams(1e-3, 64), SeedPath(3))
    with pytest.raises(ValueError, match="advective number"):
        evolve(u, FlowConfig(64, 1e-2, 0.1))
    umax = 50.0
    nu = FlowConfig(64, stable_dt(64, umax), 1.0).advective_number(umax)
    assert 1.99 < nu <= 2.0


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(8, 0.0, 1.0)
    with pytest.raises(ValueError):
        FlowConfig(8, 1e-3, 1.0, scheme="euler")
    assert FlowConfig(8, 0.3, 1.0).n_steps == 4
    assert FlowConfig(8, 0.3, -1.0).step == pytest.approx(-0.25)


def test_snapshots_match_direct_evolution_and_round_trip(tmp_path):
    u = sample_mu_beta(MeasureParams(0.5, 16), SeedPath(5))
    cfg = FlowConfig(16, 1e-4, 0.02)
    snaps = evolve_with_snapshots(u, cfg, [0.01, 0.02])
    assert np.allclose(snaps[0.02].coeffs, evolve(u, cfg).coeffs, atol=1e-12)
    assert np.allclose(snaps[0.01].coeffs, evolve(u, FlowConfig(16, 1e-4, 0.01)).coeffs, atol=1e-12)
    paths = dump_snapshots(snaps, tmp_path)
    assert np.array_equal(field_from_record(paths[0].read_text()).coeffs, snaps[0.01].coeffs)
    with pytest.raises(ValueError):
        evolve_with_snapshots(u, cfg, [0.5])


def test_probe_functions_are_unit_norm():
    for f in probe_functions(8).values():
        assert l2_norm_sq(SpectralField(f)) == pytest.approx(1.0)


def test_invariant_weight_sign():
    assert invariant_log_weight(0.1, 6.0, np.array([2.0]))[0] == pytest.approx(0.2)
    assert invariant_log_weight(0.1, -6.0, np.array([2.0]))[0] == pytest.approx(-0.2)


def test_gibbs_weight_is_invariant_and_mismatch_is_detected():
    params = MeasureParams(0.1, 4, 1.0, 3)
    matched = invariance_experiment(params, FlowConfig(4, 1e-4, 0.1, coupling=-6.0), 10_000, 5)
    assert matched.gibbs_invariant()
    mismatched = invariance_experiment(params, FlowConfig(4, 1e-4, 0.1, coupling=-6.0), 10_000, 5,
                                       weight_coupling=6.0)
    assert not mismatched.gibbs_invariant()
    assert mismatched.gibbs_z()["int_u3"] > 3


def test_invariance_preconditions():
    with pytest.raises(ValueError):
        invariance_experiment(MeasureParams(0.1, 4, 0.4, 3), FlowConfig(4, 1e-4, 0.1), 100, 1)
    with pytest.raises(ValueError):
        invariance_experiment(MeasureParams(0.1, 4, 1.0, 4), FlowConfig(4, 1e-4, 0.1), 100, 1)


def test_zero_field_and_zero_time():
    z = SpectralField.zeros(16)
    assert np.array_equal(evolve(z, FlowConfig(16, 1e-3, 0.1)).coeffs, z.coeffs)
    params = MeasureParams(0.1, 4, 1.0, 3)
    rep = invariance_experiment(params, FlowConfig(4, 1e-4, 0.0, coupling=6.0), 200, 1)
    for before, after in rep.gibbs.values():
        assert before.value == after.value


def test_rk4_drift_decreases_with_dt():
    u = sample_mu_beta(MeasureParams(1.0, 64), SeedPath(2))
    d1 = conservation_audit(u, FlowConfig(64, 2e-4, 0.05, scheme="rk4")).max_l2_drift_over_time
    d2 = conservation_audit(u, FlowConfig(64, 1e-4, 0.05, scheme="rk4")).max_l2_drift_over_time
    assert d2 < d1


def test_doubling_n_changes_wick_quartic_less_than_ensemble_stderr():
    beta, n_ens = 0.1, 100_000
    a = spectral_sum(beta, 1, 8)
    w = batch_functionals(gaussian_block(8, 1, 1, 0, 5000), beta)["wick_u4"]
    stderr = w.std() / math.sqrt(n_ens)
    for i in range(4):
        u = sample_mu_beta(MeasureParams(beta, 8), SeedPath(1, 0, i))
        vals = [batch_functionals(evolve(u.padded(N), FlowConfig(N, 6e-5, 0.1, coupling=6.0)).coeffs[None],
                                  beta, a_beta=a, amplitude=np.ones(N))["wick_u4"][0] for N in (8, 16)]
        assert abs(vals[1] - vals[0]) < stderr
