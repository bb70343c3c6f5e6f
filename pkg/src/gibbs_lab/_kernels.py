"""Compiled per-sample Gauss-Legendre stepping for small mode counts.

The quadratic term is summed directly over index pairs,
``(u^2)_k = sum_{j<k} c_j c_{k-j} + 2 sum_j c_{j+k} conj(c_j)``, which is the
same Galerkin product the padded-FFT path computes.  At N <= 32 this is
cheaper than two transforms per evaluation, and looping sample-by-sample
keeps each trajectory in cache.  Arithmetic is spelled out on separate
real and imaginary parts so the loops vectorize.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _stage(cr, ci, k1r, k1i, k2r, k2i, a0, a1, pr, pi, fac, h, wr, wi, outr, outi):
    """out = conj(P) * fac * (w^2)_k with w = P * (c + h (a0 K1 + a1 K2))."""
    N = cr.shape[0]
    for k in range(N):
        xr = cr[k] + h * (a0 * k1r[k] + a1 * k2r[k])
        xi = ci[k] + h * (a0 * k1i[k] + a1 * k2i[k])
        wr[k] = pr[k] * xr - pi[k] * xi
        wi[k] = pr[k] * xi + pi[k] * xr
    for k in range(1, N + 1):
        # pairs (j, k-j) and (k-j, j) coincide: sum j < k/2 twice, add the midpoint once
        sr = 0.0
        si = 0.0
        for j in range(1, (k + 1) // 2):
            ar, ai = wr[j - 1], wi[j - 1]
            br, bi = wr[k - j - 1], wi[k - j - 1]
            sr += ar * br - ai * bi
            si += ar * bi + ai * br
        sr *= 2.0
        si *= 2.0
        if k % 2 == 0:
            m = k // 2 - 1
            sr += wr[m] * wr[m] - wi[m] * wi[m]
            si += 2.0 * wr[m] * wi[m]
        tr = 0.0
        ti = 0.0
        for j in range(1, N - k + 1):
            ar, ai = wr[j + k - 1], wi[j + k - 1]
            br, bi = wr[j - 1], -wi[j - 1]
            tr += ar * br - ai * bi
            ti += ar * bi + ai * br
        qr = sr + 2.0 * tr
        qi = si + 2.0 * ti
        # fac is purely imaginary: fac_k = i * f_k
        f = fac[k - 1]
        yr = -f * qi
        yi = f * qr
        outr[k - 1] = pr[k - 1] * yr + pi[k - 1] * yi
        outi[k - 1] = pr[k - 1] * yi - pi[k - 1] * yr


@njit(cache=True)
def gauss_trajectories(c0, omega, fac, h, n_steps, tol, stall, max_iter, abort_drift, check_every):
    """Evolve each row of ``c0`` for ``n_steps`` steps of size ``h``.

    ``fac`` holds the imaginary parts of the nonlinear prefactor.  Returns
    ``(final, aborted, status)``; status is 1 if a stage iteration failed to
    converge.  Aborted rows are returned unchanged.
    """
    b, N = c0.shape
    r = np.sqrt(3.0) / 6.0
    a11, a12, a21, a22 = 0.25, 0.25 - r, 0.25 + r, 0.25
    th1 = (0.5 - r) * h * omega
    th2 = (0.5 + r) * h * omega
    th = h * omega
    p1r, p1i = np.cos(th1), np.sin(th1)
    p2r, p2i = np.cos(th2), np.sin(th2)
    er, ei = np.cos(th), np.sin(th)
    out = c0.copy()
    aborted = np.zeros(b, dtype=np.bool_)
    status = 0
    cr = np.empty(N)
    ci = np.empty(N)
    k1r = np.empty(N)
    k1i = np.empty(N)
    k2r = np.empty(N)
    k2i = np.empty(N)
    n1r = np.empty(N)
    n1i = np.empty(N)
    n2r = np.empty(N)
    n2i = np.empty(N)
    wr = np.empty(N)
    wi = np.empty(N)
    zero = np.zeros(N)
    tol2 = tol * tol
    stall2 = stall * stall
    for i in range(b):
        mass0 = 0.0
        for k in range(N):
            cr[k] = c0[i, k].real
            ci[k] = c0[i, k].imag
            mass0 += cr[k] * cr[k] + ci[k] * ci[k]
        for step in range(1, n_steps + 1):
            scale2 = 1e-300
            for k in range(N):
                scale2 = max(scale2, cr[k] * cr[k] + ci[k] * ci[k])
            _stage(cr, ci, zero, zero, zero, zero, 0.0, 0.0, p1r, p1i, fac, h, wr, wi, k1r, k1i)
            _stage(cr, ci, zero, zero, zero, zero, 0.0, 0.0, p2r, p2i, fac, h, wr, wi, k2r, k2i)
            previous = np.inf
            converged = False
            for it in range(max_iter):
                _stage(cr, ci, k1r, k1i, k2r, k2i, a11, a12, p1r, p1i, fac, h, wr, wi, n1r, n1i)
                _stage(cr, ci, k1r, k1i, k2r, k2i, a21, a22, p2r, p2i, fac, h, wr, wi, n2r, n2i)
                change = 0.0
                for k in range(N):
                    d1 = (n1r[k] - k1r[k]) ** 2 + (n1i[k] - k1i[k]) ** 2
                    d2 = (n2r[k] - k2r[k]) ** 2 + (n2i[k] - k2i[k]) ** 2
                    change = max(change, d1, d2)
                    k1r[k] = n1r[k]
                    k1i[k] = n1i[k]
                    k2r[k] = n2r[k]
                    k2i[k] = n2i[k]
                change *= h * h / scale2
                if change <= tol2 or (change <= stall2 and change >= previous):
                    converged = True
                    break
                previous = change
            if not converged:
                status = 1
                aborted[i] = True
                break
            for k in range(N):
                xr = cr[k] + 0.5 * h * (k1r[k] + k2r[k])
                xi = ci[k] + 0.5 * h * (k1i[k] + k2i[k])
                cr[k] = er[k] * xr - ei[k] * xi
                ci[k] = er[k] * xi + ei[k] * xr
            if step % check_every == 0 or step == n_steps:
                mass = 0.0
                for k in range(N):
                    mass += cr[k] * cr[k] + ci[k] * ci[k]
                drift = abs(mass - mass0) / mass0 if mass0 > 0 else 0.0
                if not drift <= abort_drift:
                    aborted[i] = True
                    break
        if not aborted[i]:
            for k in range(N):
                out[i, k] = cr[k] + 1j * ci[k]
    return out, aborted, status
