"""Numpy implementation of the diluted maximum-likelihood iteration.

Mirrors ``_mle_ext.pyx`` operation for operation; used when the compiled
extension is unavailable and as its reference in tests.

Two likelihoods are supported:

``depth``
    Poisson counts ``n_k`` with mean ``c p_k`` and free scale ``c``.  Profiling
    out ``c`` leaves ``sum n_k log p_k - N log sum p_k`` over included entries.
``counts``
    Raw three-point records: the zero-delay count ``C0_k`` has mean
    ``(B_k - eta_k c p_k) t_k`` and each of ``m_k`` far counts has mean
    ``B_k t_k``.  Baselines ``B_k`` and the scale ``c`` are profiled out.

The update is ``rho -> A rho A / tr`` with ``A = I + eps G`` and ``G`` the
centered, normalized likelihood gradient.  ``eps`` starts at 1, halves until
the likelihood does not decrease and doubles after each accepted step.
Iteration stops once the log-likelihood gain falls below ``tol``; for the
depth likelihood the gain is taken per count, so rescaled depths stop at the
same point.
"""
from __future__ import annotations

import numpy as np
from scipy.special import xlogy

DEPTH = 0
COUNTS = 1

EPS_MIN = 1e-30
EPS_MAX = 1e6


def probabilities(kets: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("ki,ij,kj->k", kets.conj(), rho, kets).real


def _record_terms(a, c0, fsum, m, t):
    """Per-record profiled log-likelihood and its derivative in a = eta c p."""
    q = (m + 1.0) * t
    boundary = (c0 == 0) & (fsum <= q * a)
    h = q * a - fsum - c0
    disc = np.sqrt(h * h + 4.0 * q * c0 * a)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(h <= 0, (disc - h) / (2.0 * q), 2.0 * c0 * a / (h + disc))
        u = np.where(boundary, 0.0, u)
        b = u + a
        ll = xlogy(fsum, b * t) - m * b * t + xlogy(c0, u * t) - u * t
        dla = np.where(
            boundary,
            np.where(a > 0, fsum / np.where(a > 0, a, 1.0) - m * t, -m * t),
            t - c0 / np.where(u > 0, u, 1.0),
        )
    return ll, dla


def _dldc(c, p, data):
    c0, fsum, m, t, eta = data
    _, dla = _record_terms(eta * c * p, c0, fsum, m, t)
    return float(np.sum(eta * p * dla))


def solve_scale(p, data, c_prev):
    """Maximize the concave profiled likelihood over the scale c >= 0."""
    c0, fsum, m, t, eta = data
    g0 = _dldc(0.0, p, data)
    if g0 <= 0:
        return 0.0
    if c_prev > 0:
        hi = c_prev
    else:
        ep = float(np.sum(eta * p))
        hi = (float(np.sum((fsum / m + c0) / t)) + 1.0) / max(ep, 1e-300)
    ghi = _dldc(hi, p, data)
    lo, glo = 0.0, g0
    if ghi > 0:
        for _ in range(2000):
            lo, glo = hi, ghi
            hi *= 2.0
            ghi = _dldc(hi, p, data)
            if ghi <= 0:
                break
    else:
        lo = hi * 0.5
        glo = _dldc(lo, p, data)
        while glo <= 0 and lo > 1e-300:
            hi, ghi = lo, glo
            lo *= 0.5
            glo = _dldc(lo, p, data)
        if glo <= 0:
            lo, glo = 0.0, g0
    if ghi == 0:
        return hi
    # Illinois variant of regula falsi; glo > 0 > ghi throughout
    x = hi
    side = 0
    for _ in range(300):
        x = (lo * ghi - hi * glo) / (ghi - glo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        gx = _dldc(x, p, data)
        if gx == 0:
            return x
        if gx > 0:
            lo, glo = x, gx
            if side == 1:
                ghi *= 0.5
            side = 1
        else:
            hi, ghi = x, gx
            if side == -1:
                glo *= 0.5
            side = -1
        if hi - lo <= 1e-14 * hi:
            break
    return x


def _evaluate(mode, kets, rho, data, c_prev):
    """Return (loglik, gradient coefficients, probabilities, normalizer, scale)."""
    p = probabilities(kets, rho)
    if mode == DEPTH:
        n, incl = data
        pi = np.where(incl, p, 0.0)
        total_n = float(np.sum(np.where(incl, n, 0.0)))
        sp = float(np.sum(pi))
        if np.any(incl & (n > 0) & (p <= 0)) or sp <= 0:
            return -np.inf, None, p, total_n, 0.0
        ll = float(np.sum(xlogy(np.where(incl, n, 0.0), np.where(incl, p, 1.0)))) - total_n * np.log(sp)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(incl, np.where(n > 0, n / np.where(p > 0, p, 1.0), 0.0) - total_n / sp, 0.0)
        return ll, g, p, total_n, 0.0
    c0, fsum, m, t, eta = data
    if np.any(p < 0):
        return -np.inf, None, p, 1.0, 0.0
    c = solve_scale(p, data, c_prev)
    ll_k, dla = _record_terms(eta * c * p, c0, fsum, m, t)
    ll = float(np.sum(ll_k))
    g = eta * c * dla
    norm = float(np.sum(eta * c * t * p))
    return ll, g, p, max(norm, 1e-300), c


def diluted_mle(mode, kets, data, rho0, tol, max_iter):
    """Run the iteration; returns (rho, loglik, iterations, converged, trace, scale)."""
    kets = np.ascontiguousarray(kets, dtype=complex)
    rho = np.array(rho0, dtype=complex)
    dim = rho.shape[0]
    eye = np.eye(dim, dtype=complex)
    ll, g, p, norm, c = _evaluate(mode, kets, rho, data, 0.0)
    if not np.isfinite(ll):
        raise FloatingPointError("initial state has zero likelihood")
    trace = [ll]
    eps = 1.0
    it = 0
    converged = False
    while it < max_iter:
        grad = (kets.T * g) @ kets.conj()
        grad = (grad - float(np.dot(g, p)) * eye) / norm
        if not np.any(grad):
            converged = True
            break
        accepted = False
        while eps > EPS_MIN:
            a = eye + eps * grad
            trial = a @ rho @ a
            trial = 0.5 * (trial + trial.conj().T)
            trial /= trial.trace().real
            ll_t, g_t, p_t, norm_t, c_t = _evaluate(mode, kets, trial, data, c)
            if ll_t >= ll:
                accepted = True
                break
            eps *= 0.5
        if not accepted:
            converged = True
            break
        gain = ll_t - ll
        rho, ll, g, p, norm, c = trial, ll_t, g_t, p_t, norm_t, c_t
        it += 1
        trace.append(ll)
        if gain < tol * norm:
            converged = True
            break
        eps = min(2.0 * eps, EPS_MAX)
    return rho, ll, it, converged, np.array(trace), c


def depth_mle(kets, counts, included, rho0, tol=1e-10, max_iter=100_000):
    data = (np.asarray(counts, float), np.asarray(included, bool))
    return diluted_mle(DEPTH, kets, data, rho0, tol, max_iter)


def counts_mle(kets, c_zero, far_sum, n_far, times, eta, rho0, tol=1e-10, max_iter=100_000):
    data = tuple(np.asarray(x, float) for x in (c_zero, far_sum, n_far, times, eta))
    return diluted_mle(COUNTS, kets, data, rho0, tol, max_iter)


def counts_loglik(kets, rho, c_zero, far_sum, n_far, times, eta):
    """Profiled log-likelihood of raw records at ``rho``; returns (loglik, scale)."""
    data = tuple(np.asarray(x, float) for x in (c_zero, far_sum, n_far, times, eta))
    ll, _, _, _, c = _evaluate(COUNTS, np.asarray(kets, complex), np.asarray(rho, complex), data, 0.0)
    return ll, c


def depth_loglik(kets, rho, counts, included):
    """Profiled depth log-likelihood at ``rho``."""
    data = (np.asarray(counts, float), np.asarray(included, bool))
    return _evaluate(DEPTH, np.asarray(kets, complex), np.asarray(rho, complex), data, 0.0)[0]
