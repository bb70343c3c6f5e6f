"""Pseudospectral periodic KdV with integrating-factor Runge-Kutta steppers.

The equation is ``u_t + u_xxx + coupling * u u_x = 0`` on T = R/Z; the
default ``coupling = -6`` is ``u_t + u_xxx - 6 u u_x = 0``.  In Fourier
space ``d/dt u_k = i w_k u_k - (coupling/2) (2 pi i k) (u^2)_k`` with
``w_k = (2 pi k)^3``.  The linear phase is applied exactly; the quadratic
term is formed on a zero-padded grid of size >= 3N+1 (the 2/3 rule), so the
truncated system is the exact Galerkin projection.  The zero mode is never
stored.

Two fourth-order Runge-Kutta schemes run in the interaction picture:

``gauss4`` (default)
    two-stage Gauss-Legendre, solved by fixed-point iteration.  It conserves
    ``int u^2`` to round-off, is symmetric (time-reversible) and preserves
    phase-space volume, which is what measure-invariance experiments need.
``rk4``
    the classical explicit scheme.  Cheaper per step, but once the triad
    phases ``(2 pi)^3 3 k j (k-j) dt`` are not resolved it loses ``int u^2``
    at first order in dt.

The truncated flow is Hamiltonian for ``H = 1/2 int u_x^2 - (coupling/6) int u^3``
and conserves ``int u^2``, so ``exp(beta (coupling/6) int u^3) d mu_beta`` (with
the L^2 cutoff) is exactly invariant at every truncation N.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import fft

from .field import SpectralField, batch_l2_norm_sq, field_to_record
from .rng import gaussian_block
from .sampler import MeasureParams, mu_beta_amplitude
from .stats import Estimate, LowESSWarning, mean_estimate, weighted_mean
from .wick import batch_functionals

__all__ = [
    "ConservationAudit",
    "FlowBlowUp",
    "FlowConfig",
    "InvarianceReport",
    "conservation_audit",
    "dump_snapshots",
    "evolve",
    "evolve_batch",
    "evolve_with_snapshots",
    "invariance_experiment",
    "invariant_log_weight",
    "reversal_residual",
    "stable_dt",
    "probe_functions",
]

# RK4's stability region reaches |z| = 2 sqrt(2) on the imaginary axis.
RK4_IMAG_LIMIT = 2.0 * math.sqrt(2.0)
# Gauss stage iteration contracts when |dt| * Lip(N) * rho(A) < 1, rho(A) ~ 0.29.
GAUSS_CONTRACTION_LIMIT = 2.0
SCHEME_LIMITS = {"rk4": RK4_IMAG_LIMIT, "gauss4": GAUSS_CONTRACTION_LIMIT}
GAUSS_TOL = 1e-15
GAUSS_STALL = 1e-12
GAUSS_MAX_ITER = 60
DRIFT_ABORT = 1e-3
DIRECT_MAX_MODES = 32
MAX_EXCLUSION = 0.01
SPECTRUM_MODES = (1, 2, 4, 8)


class FlowBlowUp(RuntimeError):
    """``int u^2`` drifted beyond the abort threshold."""


@dataclass(frozen=True)
class FlowConfig:
    n_modes: int
    dt: float
    t_final: float
    dealias: bool = True
    coupling: float = -6.0
    nonlinear: bool = True
    scheme: str = "gauss4"
    cfl: float | None = None

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if not math.isfinite(self.t_final):
            raise ValueError("t_final must be finite")
        if self.scheme not in SCHEME_LIMITS:
            raise ValueError(f"scheme must be one of {sorted(SCHEME_LIMITS)}")
        limit = SCHEME_LIMITS[self.scheme]
        if self.cfl is None:
            object.__setattr__(self, "cfl", limit)
        elif not 0 < self.cfl <= limit:
            raise ValueError(f"cfl must lie in (0, {limit:.4f}] for {self.scheme}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(abs(self.t_final) / self.dt - 1e-9))

    @property
    def step(self) -> float:
        """Signed step that lands exactly on ``t_final``."""
        n = self.n_steps
        return self.t_final / n if n else 0.0

    @property
    def grid_size(self) -> int:
        m = 3 * self.n_modes + 1 if self.dealias else 2 * self.n_modes + 1
        return fft.next_fast_len(m, real=True)

    def advective_number(self, max_abs_u: float) -> float:
        """``|dt| * |coupling| * max|u| * 2 pi N``: the nonlinear stiffness per step.

        The dispersive part is integrated exactly and imposes no restriction.
        """
        return abs(self.step) * abs(self.coupling) * max_abs_u * 2.0 * math.pi * self.n_modes


def stable_dt(n_modes: int, max_abs_u: float, coupling: float = -6.0,
              cfl: float = GAUSS_CONTRACTION_LIMIT) -> float:
    """Largest dt with advective number ``cfl`` for fields bounded by ``max_abs_u``."""
    speed = abs(coupling) * max(max_abs_u, 1e-300) * 2.0 * math.pi * n_modes
    return cfl / speed


class _Rhs:
    def __init__(self, cfg: FlowConfig):
        N = cfg.n_modes
        self.N = N
        self.G = cfg.grid_size
        k = np.arange(1, N + 1, dtype=np.float64)
        self.nl_factor = -(cfg.coupling / 2.0) * (2j * math.pi * k)
        self.omega = (2.0 * math.pi * k) ** 3
        self.enabled = cfg.nonlinear

    def grid(self, c: np.ndarray) -> np.ndarray:
        spec = np.zeros(c.shape[:-1] + (self.G // 2 + 1,), dtype=np.complex128)
        spec[..., 1: self.N + 1] = c
        return fft.irfft(spec, n=self.G, axis=-1, norm="forward")

    def __call__(self, c: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return np.zeros_like(c)
        u = self.grid(c)
        sq = fft.rfft(u * u, axis=-1, norm="forward")[..., 1: self.N + 1]
        return self.nl_factor * sq


class _Stepper:
    """One step of the chosen scheme in the interaction picture ``v = e^{-iwt} u``."""

    def __init__(self, cfg: FlowConfig, rhs: _Rhs):
        self.rhs = rhs
        self.scheme = cfg.scheme
        h = cfg.step
        self.h = h
        self.E = np.exp(0.5j * h * rhs.omega)
        self.E2 = self.E * self.E
        if self.scheme == "gauss4":
            r = math.sqrt(3.0) / 6.0
            self.A = ((0.25, 0.25 - r), (0.25 + r, 0.25))
            self.P = [np.exp(1j * c * h * rhs.omega) for c in (0.5 - r, 0.5 + r)]
        self.iterations = 0

    def _f(self, i: int, V: np.ndarray) -> np.ndarray:
        P = self.P[i]
        return np.conj(P) * self.rhs(P * V)

    def __call__(self, c: np.ndarray) -> np.ndarray:
        h, E, E2, rhs = self.h, self.E, self.E2, self.rhs
        if self.scheme == "rk4":
            k1 = rhs(c)
            k2 = rhs(E * (c + 0.5 * h * k1))
            k3 = rhs(E * c + 0.5 * h * k2)
            k4 = rhs(E2 * c + h * E * k3)
            return E2 * c + (h / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
        if not rhs.enabled:
            return E2 * c
        A = self.A
        K1 = self._f(0, c)
        K2 = self._f(1, c)
        scale = np.max(np.abs(c)) + 1e-300
        previous = math.inf
        for it in range(1, GAUSS_MAX_ITER + 1):
            N1 = self._f(0, c + h * (A[0][0] * K1 + A[0][1] * K2))
            N2 = self._f(1, c + h * (A[1][0] * K1 + A[1][1] * K2))
            change = max(np.max(np.abs(N1 - K1)), np.max(np.abs(N2 - K2))) * abs(h) / scale
            K1, K2 = N1, N2
            # stop at the tolerance, or once round-off stalls the contraction
            if change <= GAUSS_TOL or (change <= GAUSS_STALL and change >= previous):
                break
            previous = change
        else:
            raise FlowBlowUp(f"stage iteration did not converge in {GAUSS_MAX_ITER} sweeps; reduce dt")
        self.iterations += it
        return E2 * (c + 0.5 * h * (K1 + K2))


def evolve_batch(coeffs: np.ndarray, cfg: FlowConfig, abort_drift: float = DRIFT_ABORT,
                 snapshots: dict[float, list] | None = None,
                 backend: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Evolve rows of ``coeffs`` (shape (b, N)); returns ``(final, aborted_mask)``.

    Rows whose ``int u^2`` drifts by more than ``abort_drift`` (relative) are
    flagged and returned unchanged.  ``snapshots`` maps requested times to
    lists that receive copies of the whole batch.  ``backend`` is ``"fft"``
    (vectorized over rows), ``"direct"`` (compiled pair sums, gauss4 only) or
    ``"auto"``, which picks ``"direct"`` for N <= 32 without snapshots.
    """
    c = np.array(np.atleast_2d(coeffs), dtype=np.complex128)
    if c.shape[-1] > cfg.n_modes:
        raise ValueError("field has more modes than the flow configuration")
    if c.shape[-1] < cfg.n_modes:
        c = np.pad(c, ((0, 0), (0, cfg.n_modes - c.shape[-1])))
    aborted = np.zeros(c.shape[0], dtype=bool)
    n_steps = cfg.n_steps
    if n_steps == 0:
        return c, aborted
    rhs = _Rhs(cfg)
    if cfg.nonlinear:
        umax = float(np.max(np.abs(rhs.grid(c)))) if c.size else 0.0
        nu = cfg.advective_number(umax)
        if nu > cfg.cfl:
            raise ValueError(f"advective number {nu:.3g} exceeds the {cfg.scheme} limit {cfg.cfl:g}; "
                             f"use dt <= {stable_dt(cfg.n_modes, umax, cfg.coupling, cfg.cfl):.3g}")
    if backend == "auto":
        backend = "direct" if (cfg.scheme == "gauss4" and cfg.nonlinear and cfg.n_modes <= DIRECT_MAX_MODES
                               and not snapshots) else "fft"
    check_every = max(1, n_steps // 64)
    h = cfg.step
    if backend == "direct":
        if cfg.scheme != "gauss4" or snapshots:
            raise ValueError("the direct backend supports gauss4 without snapshots only")
        from ._kernels import gauss_trajectories
        fac = rhs.nl_factor.imag.copy() if cfg.nonlinear else np.zeros(cfg.n_modes)
        out, aborted, status = gauss_trajectories(c, rhs.omega, fac, h, n_steps, GAUSS_TOL, GAUSS_STALL,
                                                  GAUSS_MAX_ITER, abort_drift, check_every)
        if status:
            raise FlowBlowUp(f"stage iteration did not converge in {GAUSS_MAX_ITER} sweeps; reduce dt")
        return out, aborted
    if backend != "fft":
        raise ValueError(f"unknown backend {backend!r}")
    stepper = _Stepper(cfg, rhs)
    start = c.copy()
    mass0 = batch_l2_norm_sq(c)
    scale = np.where(mass0 > 0, mass0, 1.0)
    pending = sorted(snapshots) if snapshots else []
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            c = stepper(c)
            if step % check_every == 0 or step == n_steps:
                drift = np.abs(batch_l2_norm_sq(c) - mass0) / scale
                aborted |= ~(drift <= abort_drift)
                c[aborted] = start[aborted]
            while pending and abs(step * h) >= abs(pending[0]) - 1e-12:
                snapshots[pending.pop(0)].append(c.copy())
    return c, aborted


def evolve(field: SpectralField, cfg: FlowConfig) -> SpectralField:
    """Solution at ``cfg.t_final``; raises ``FlowBlowUp`` if ``int u^2`` drifts > 1e-3."""
    if field.n_modes > cfg.n_modes:
        raise ValueError("field.n_modes exceeds cfg.n_modes")
    out, aborted = evolve_batch(field.coeffs[None, :], cfg)
    if aborted[0]:
        raise FlowBlowUp(f"int u^2 drifted by more than {DRIFT_ABORT:g} (dt={cfg.dt:g}, N={cfg.n_modes})")
    return SpectralField(out[0], field.beta_tag)


def evolve_with_snapshots(field: SpectralField, cfg: FlowConfig,
                          times: list[float]) -> dict[float, SpectralField]:
    """States at each requested time in ``(0, t_final]`` (same sign as ``t_final``)."""
    for t in times:
        if cfg.t_final == 0 or not 0 < t / cfg.t_final <= 1 + 1e-12:
            raise ValueError(f"snapshot time {t} outside (0, t_final]")
    snaps = {t: [] for t in times}
    padded = field.padded(cfg.n_modes) if field.n_modes < cfg.n_modes else field
    _, aborted = evolve_batch(padded.coeffs[None, :], cfg, snapshots=snaps, backend="fft")
    if aborted[0]:
        raise FlowBlowUp("int u^2 drifted by more than 1e-3")
    return {t: SpectralField(snaps[t][0][0], field.beta_tag) for t in times}


def dump_snapshots(snapshots: dict[float, SpectralField], directory: str | Path,
                   prefix: str = "snapshot") -> list[Path]:
    """Write each snapshot in the spectral-field record format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, f in sorted(snapshots.items()):
        path = directory / f"{prefix}_t{t:.6g}.txt"
        path.write_text(field_to_record(f))
        paths.append(path)
    return paths


@dataclass(frozen=True)
class ConservationAudit:
    mean_drift: float
    l2_drift: float
    max_l2_drift_over_time: float


def conservation_audit(field: SpectralField, cfg: FlowConfig, n_checkpoints: int = 16) -> ConservationAudit:
    """Relative drift of ``int u`` and ``int u^2`` between 0 and ``t_final``.

    ``int u`` is identically zero (the zero mode is not represented), so its
    drift is reported as exactly 0.
    """
    times = [cfg.t_final * (i + 1) / n_checkpoints for i in range(n_checkpoints)]
    snaps = {t: [] for t in times}
    padded = field.padded(cfg.n_modes) if field.n_modes < cfg.n_modes else field
    evolve_batch(padded.coeffs[None, :], cfg, abort_drift=math.inf, snapshots=snaps, backend="fft")
    m0 = float(batch_l2_norm_sq(padded.coeffs))
    scale = m0 if m0 > 0 else 1.0
    drifts = [abs(float(batch_l2_norm_sq(snaps[t][0][0])) - m0) / scale for t in times]
    return ConservationAudit(0.0, drifts[-1], max(drifts))


def reversal_residual(field: SpectralField, cfg: FlowConfig) -> float:
    """``||S_{-t} S_t u - u|| / ||u||`` in l^2 of the coefficients."""
    forward, _ = evolve_batch(field.coeffs[None, :], cfg, abort_drift=math.inf)
    back_cfg = replace(cfg, t_final=-cfg.t_final)
    back, _ = evolve_batch(forward, back_cfg, abort_drift=math.inf)
    norm = float(np.linalg.norm(field.coeffs)) or 1.0
    return float(np.linalg.norm(back[0, : field.n_modes] - field.coeffs) / norm)


# ------------------------------------------------------------ invariance

def invariant_log_weight(beta: float, coupling: float, int_u3: np.ndarray) -> np.ndarray:
    """Log-density of the invariant Gibbs measure relative to mu_beta (before the cutoff)."""
    return beta * (coupling / 6.0) * np.asarray(int_u3)


def probe_functions(n_modes: int) -> dict[str, np.ndarray]:
    """Unit-L^2 test functions ``f_hat_n`` used by the invariance experiment."""
    panel = {}
    for name, modes in (("cos1", {1: 1.0}), ("sin2", {2: -1j}), ("mix123", {1: 1.0, 2: 1.0j, 3: 1.0})):
        if max(modes) > n_modes:
            continue
        f = np.zeros(n_modes, dtype=np.complex128)
        for m, v in modes.items():
            f[m - 1] = v
        f /= math.sqrt(2.0 * np.sum(np.abs(f) ** 2))
        panel[name] = f
    return panel


def _observables(c: np.ndarray, beta: float) -> dict[str, np.ndarray]:
    N = c.shape[1]
    d = batch_functionals(c, beta, amplitude=np.ones(N))
    obs = {"int_u2": d["int_u2"], "int_u3": d["int_u3"], "wick_u4": d["wick_u4"]}
    for m in SPECTRUM_MODES:
        if m <= N:
            obs[f"abs_u{m}_sq"] = np.abs(c[:, m - 1]) ** 2
    for name, f in probe_functions(N).items():
        pairing = 2.0 * np.real(c @ np.conj(f))
        obs[f"char_{name}"] = np.exp(1j * pairing)
    return obs


@dataclass(frozen=True)
class InvarianceReport:
    """Before/after estimates per observable for the Gibbs ensemble and the mu_beta control.

    ``z`` uses the combined standard error ``sqrt(se_before^2 + se_after^2)``;
    ``paired_z`` (the mean per-sample change over its standard error) is a
    diagnostic only.
    """

    beta: float
    n_modes: int
    t_final: float
    n: int
    n_excluded: int
    gibbs: dict[str, tuple[Estimate, Estimate]]
    control: dict[str, tuple[Estimate, Estimate]]
    gibbs_paired_z: dict[str, float]
    control_paired_z: dict[str, float]
    threshold: float = 3.0

    @staticmethod
    def _z(pair: tuple[Estimate, Estimate]) -> float:
        before, after = pair
        se = math.hypot(before.stderr, after.stderr)
        d = abs(after.value - before.value)
        return 0.0 if d == 0 else (d / se if se > 0 else math.inf)

    @property
    def exclusion_fraction(self) -> float:
        return self.n_excluded / self.n

    def gibbs_z(self) -> dict[str, float]:
        return {k: self._z(v) for k, v in self.gibbs.items()}

    def control_z(self) -> dict[str, float]:
        return {k: self._z(v) for k, v in self.control.items()}

    def gibbs_invariant(self) -> bool:
        return self.exclusion_fraction <= MAX_EXCLUSION and max(self.gibbs_z().values()) <= self.threshold

    def control_detected(self) -> bool:
        return max(self.control_z().values()) > self.threshold

    def rows(self) -> list[dict]:
        out = []
        for label, table, zs, pz in (("gibbs", self.gibbs, self.gibbs_z(), self.gibbs_paired_z),
                                     ("control", self.control, self.control_z(), self.control_paired_z)):
            for name, (b, a) in table.items():
                out.append({"ensemble": label, "observable": name,
                            "before": _real(b.value), "after": _real(a.value),
                            "before_stderr": b.stderr, "after_stderr": a.stderr,
                            "z": zs[name], "paired_z": pz[name], "ess": a.ess})
        return out


def _real(v):
    return v.real if isinstance(v, complex) else v


def _paired_z(est: Estimate) -> float:
    if est.stderr == 0:
        return 0.0 if est.value == 0 else math.inf
    return abs(est.value) / est.stderr


def _evolve_block(args):
    params, cfg, seed, stream, start, count = args
    g = gaussian_block(params.n_modes, seed, stream, start, count)
    c0 = g * mu_beta_amplitude(params.beta, params.n_modes)
    c1, aborted = evolve_batch(c0, cfg)
    return c0, c1, aborted


def invariance_experiment(params: MeasureParams, cfg: FlowConfig, n: int, seed: int,
                          stream: int = 0, block: int = 4096, workers: int = 1,
                          weight_coupling: float | None = None) -> InvarianceReport:
    """Evolve a mu_beta ensemble and compare observables before and after.

    The Gibbs ensemble carries weights ``1_{int u^2 <= K beta^{-1/2}}
    exp(beta (coupling/6) int u^3)`` fixed at time 0; the control uses unit
    weights (plain mu_beta).  Aborted trajectories are dropped from both.
    ``weight_coupling`` overrides the coupling used in the weights only, which
    builds a deliberately mismatched (non-invariant) ensemble.
    """
    if params.power_p != 3:
        raise ValueError("the invariance experiment uses the cubic weight (p = 3)")
    if params.cutoff_K <= 0.5:
        raise ValueError("cutoff K must satisfy K > 1/2")
    if cfg.n_modes != params.n_modes:
        raise ValueError("cfg.n_modes must equal params.n_modes")
    if n < 2:
        raise ValueError("n must be at least 2")
    jobs = [(params, cfg, seed, stream, s, min(block, n - s)) for s in range(0, n, block)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_evolve_block, jobs))
    else:
        parts = [_evolve_block(j) for j in jobs]
    c0 = np.concatenate([p[0] for p in parts])
    c1 = np.concatenate([p[1] for p in parts])
    aborted = np.concatenate([p[2] for p in parts])
    keep = ~aborted
    before = _observables(c0[keep], params.beta)
    after = _observables(c1[keep], params.beta)
    kappa = cfg.coupling if weight_coupling is None else weight_coupling
    log_w = invariant_log_weight(params.beta, kappa, before["int_u3"])
    mask = before["int_u2"] <= params.cutoff_level
    gibbs, control, gz, cz = {}, {}, {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowESSWarning)
        for name in before:
            gibbs[name] = (weighted_mean(log_w, before[name], mask), weighted_mean(log_w, after[name], mask))
            control[name] = (mean_estimate(before[name]), mean_estimate(after[name]))
            gz[name] = _paired_z(weighted_mean(log_w, after[name] - before[name], mask))
            cz[name] = _paired_z(mean_estimate(after[name] - before[name]))
    return InvarianceReport(params.beta, params.n_modes, cfg.t_final, n, int(aborted.sum()),
                            gibbs, control, gz, cz)
