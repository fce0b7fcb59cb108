# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled diluted maximum-likelihood iteration.

Same algorithm and call signatures as ``_fallback``; see that module for the
likelihood definitions.
"""
import numpy as np

from libc.math cimport log, sqrt, isfinite, INFINITY

cdef int DEPTH = 0
cdef int COUNTS = 1
cdef double EPS_MIN = 1e-30
cdef double EPS_MAX = 1e6


cdef inline double xlogy(double x, double y) nogil:
    if x == 0.0:
        return 0.0
    if y <= 0.0:
        return -INFINITY
    return x * log(y)


cdef void _probs(double complex[:, ::1] kets, double complex[:, ::1] rho, double[::1] p) noexcept nogil:
    cdef Py_ssize_t K = kets.shape[0], D = kets.shape[1], k, i, j
    cdef double complex acc, s
    for k in range(K):
        s = 0
        for i in range(D):
            acc = 0
            for j in range(D):
                acc = acc + rho[i, j] * kets[k, j]
            s = s + kets[k, i].conjugate() * acc
        p[k] = s.real


cdef inline void _record(double a, double c0, double fsum, double m, double t,
                         double* ll, double* dla) noexcept nogil:
    cdef double q = (m + 1.0) * t
    cdef double h, disc, u, b
    if c0 == 0.0 and fsum <= q * a:
        u = 0.0
        b = a
        ll[0] = xlogy(fsum, b * t) - m * b * t
        if a > 0:
            dla[0] = fsum / a - m * t
        else:
            dla[0] = -m * t
        return
    h = q * a - fsum - c0
    disc = sqrt(h * h + 4.0 * q * c0 * a)
    if h <= 0:
        u = (disc - h) / (2.0 * q)
    else:
        u = 2.0 * c0 * a / (h + disc)
    b = u + a
    ll[0] = xlogy(fsum, b * t) - m * b * t + xlogy(c0, u * t) - u * t
    if u > 0:
        dla[0] = t - c0 / u
    else:
        dla[0] = t


cdef double _dldc(double c, double[::1] p, double[::1] c0, double[::1] fsum,
                  double[::1] m, double[::1] t, double[::1] eta) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, ll, dla
    for k in range(p.shape[0]):
        _record(eta[k] * c * p[k], c0[k], fsum[k], m[k], t[k], &ll, &dla)
        s += eta[k] * p[k] * dla
    return s


cdef double _solve_scale(double[::1] p, double[::1] c0, double[::1] fsum, double[::1] m,
                         double[::1] t, double[::1] eta, double c_prev) noexcept nogil:
    cdef Py_ssize_t k
    cdef int it, side
    cdef double g0, hi, ghi, lo, glo, x, gx, ep, acc
    g0 = _dldc(0.0, p, c0, fsum, m, t, eta)
    if g0 <= 0:
        return 0.0
    if c_prev > 0:
        hi = c_prev
    else:
        ep = 0.0
        acc = 0.0
        for k in range(p.shape[0]):
            ep += eta[k] * p[k]
            acc += (fsum[k] / m[k] + c0[k]) / t[k]
        hi = (acc + 1.0) / (ep if ep > 1e-300 else 1e-300)
    ghi = _dldc(hi, p, c0, fsum, m, t, eta)
    lo = 0.0
    glo = g0
    if ghi > 0:
        for it in range(2000):
            lo = hi
            glo = ghi
            hi *= 2.0
            ghi = _dldc(hi, p, c0, fsum, m, t, eta)
            if ghi <= 0:
                break
    else:
        lo = hi * 0.5
        glo = _dldc(lo, p, c0, fsum, m, t, eta)
        while glo <= 0 and lo > 1e-300:
            hi = lo
            ghi = glo
            lo *= 0.5
            glo = _dldc(lo, p, c0, fsum, m, t, eta)
        if glo <= 0:
            lo = 0.0
            glo = g0
    if ghi == 0:
        return hi
    x = hi
    side = 0
    for it in range(300):
        x = (lo * ghi - hi * glo) / (ghi - glo)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        gx = _dldc(x, p, c0, fsum, m, t, eta)
        if gx == 0:
            return x
        if gx > 0:
            lo = x
            glo = gx
            if side == 1:
                ghi *= 0.5
            side = 1
        else:
            hi = x
            ghi = gx
            if side == -1:
                glo *= 0.5
            side = -1
        if hi - lo <= 1e-14 * hi:
            break
    return x


cdef class _Problem:
    cdef int mode
    cdef double complex[:, ::1] kets
    cdef double[::1] n
    cdef unsigned char[::1] incl
    cdef double[::1] c0, fsum, m, t, eta
    cdef double[::1] p, g
    cdef double norm, scale

    cdef double evaluate(self, double complex[:, ::1] rho, double c_prev):
        """Fill p, g, norm, scale for ``rho`` and return the log-likelihood."""
        cdef Py_ssize_t K = self.kets.shape[0], k
        cdef double ll = 0.0, total_n = 0.0, sp = 0.0, c, lk, dla, nrm = 0.0
        _probs(self.kets, rho, self.p)
        if self.mode == DEPTH:
            for k in range(K):
                if self.incl[k]:
                    total_n += self.n[k]
                    sp += self.p[k]
                    if self.n[k] > 0 and self.p[k] <= 0:
                        return -INFINITY
            if sp <= 0:
                return -INFINITY
            for k in range(K):
                if self.incl[k]:
                    ll += xlogy(self.n[k], self.p[k])
                    self.g[k] = (self.n[k] / self.p[k] if self.n[k] > 0 else 0.0) - total_n / sp
                else:
                    self.g[k] = 0.0
            self.norm = total_n
            self.scale = 0.0
            return ll - total_n * log(sp)
        for k in range(K):
            if self.p[k] < 0:
                return -INFINITY
        c = _solve_scale(self.p, self.c0, self.fsum, self.m, self.t, self.eta, c_prev)
        for k in range(K):
            _record(self.eta[k] * c * self.p[k], self.c0[k], self.fsum[k], self.m[k], self.t[k], &lk, &dla)
            ll += lk
            self.g[k] = self.eta[k] * c * dla
            nrm += self.eta[k] * c * self.t[k] * self.p[k]
        self.norm = nrm if nrm > 1e-300 else 1e-300
        self.scale = c
        return ll


cdef _run(_Problem prob, rho0, double tol, long max_iter):
    cdef Py_ssize_t K = prob.kets.shape[0], D = prob.kets.shape[1], i, j, k, l
    cdef double complex[:, ::1] rho = np.array(rho0, dtype=complex)
    cdef double complex[:, ::1] trial = np.zeros((D, D), dtype=complex)
    cdef double complex[:, ::1] grad = np.zeros((D, D), dtype=complex)
    cdef double complex[:, ::1] amat = np.zeros((D, D), dtype=complex)
    cdef double complex[:, ::1] tmp = np.zeros((D, D), dtype=complex)
    cdef double[::1] p_saved = np.zeros(K)
    cdef double[::1] g_saved = np.zeros(K)
    cdef double ll, ll_t, eps = 1.0, gain, mean, trc, norm_saved, c_saved
    cdef double complex acc
    cdef long it = 0
    cdef bint converged = False, accepted, nonzero
    trace = []

    ll = prob.evaluate(rho, 0.0)
    if not isfinite(ll):
        raise FloatingPointError("initial state has zero likelihood")
    trace.append(ll)
    while it < max_iter:
        # gradient operator from the state last accepted
        mean = 0.0
        for k in range(K):
            mean += prob.g[k] * prob.p[k]
            p_saved[k] = prob.p[k]
            g_saved[k] = prob.g[k]
        norm_saved = prob.norm
        c_saved = prob.scale
        nonzero = False
        for i in range(D):
            for j in range(D):
                acc = 0
                for k in range(K):
                    acc = acc + g_saved[k] * prob.kets[k, i] * prob.kets[k, j].conjugate()
                if i == j:
                    acc = acc - mean
                grad[i, j] = acc / norm_saved
                if grad[i, j] != 0:
                    nonzero = True
        if not nonzero:
            converged = True
            break
        accepted = False
        while eps > EPS_MIN:
            for i in range(D):
                for j in range(D):
                    amat[i, j] = eps * grad[i, j]
                amat[i, i] = amat[i, i] + 1.0
            for i in range(D):
                for j in range(D):
                    acc = 0
                    for l in range(D):
                        acc = acc + amat[i, l] * rho[l, j]
                    tmp[i, j] = acc
            for i in range(D):
                for j in range(D):
                    acc = 0
                    for l in range(D):
                        acc = acc + tmp[i, l] * amat[l, j]
                    trial[i, j] = acc
            trc = 0.0
            for i in range(D):
                for j in range(i, D):
                    acc = 0.5 * (trial[i, j] + trial[j, i].conjugate())
                    trial[i, j] = acc
                    trial[j, i] = acc.conjugate()
                trc += trial[i, i].real
            for i in range(D):
                for j in range(D):
                    trial[i, j] = trial[i, j] / trc
            ll_t = prob.evaluate(trial, c_saved)
            if ll_t >= ll:
                accepted = True
                break
            eps *= 0.5
        if not accepted:
            # restore the state of the last accepted point
            for k in range(K):
                prob.p[k] = p_saved[k]
                prob.g[k] = g_saved[k]
            prob.norm = norm_saved
            prob.scale = c_saved
            converged = True
            break
        gain = ll_t - ll
        rho[:, :] = trial
        ll = ll_t
        it += 1
        trace.append(ll)
        if gain < (tol * prob.norm if prob.mode == DEPTH else tol):
            converged = True
            break
        eps = min(2.0 * eps, EPS_MAX)
    return np.asarray(rho).copy(), ll, int(it), bool(converged), np.array(trace), prob.scale


cdef _Problem _setup(int mode, kets):
    cdef _Problem prob = _Problem()
    prob.mode = mode
    prob.kets = np.array(kets, dtype=complex, order='C')
    K = prob.kets.shape[0]
    prob.p = np.zeros(K)
    prob.g = np.zeros(K)
    return prob


def depth_mle(kets, counts, included, rho0, double tol=1e-10, long max_iter=100_000):
    cdef _Problem prob = _setup(DEPTH, kets)
    prob.n = np.array(counts, dtype=float, order='C')
    prob.incl = np.array(included, dtype=np.uint8, order='C')
    return _run(prob, rho0, tol, max_iter)


def counts_mle(kets, c_zero, far_sum, n_far, times, eta, rho0, double tol=1e-10, long max_iter=100_000):
    cdef _Problem prob = _setup(COUNTS, kets)
    prob.c0 = np.array(c_zero, dtype=float, order='C')
    prob.fsum = np.array(far_sum, dtype=float, order='C')
    prob.m = np.array(n_far, dtype=float, order='C')
    prob.t = np.array(times, dtype=float, order='C')
    prob.eta = np.array(eta, dtype=float, order='C')
    return _run(prob, rho0, tol, max_iter)


def counts_loglik(kets, rho, c_zero, far_sum, n_far, times, eta):
    cdef _Problem prob = _setup(COUNTS, kets)
    prob.c0 = np.array(c_zero, dtype=float, order='C')
    prob.fsum = np.array(far_sum, dtype=float, order='C')
    prob.m = np.array(n_far, dtype=float, order='C')
    prob.t = np.array(times, dtype=float, order='C')
    prob.eta = np.array(eta, dtype=float, order='C')
    ll = prob.evaluate(np.array(rho, dtype=complex, order='C'), 0.0)
    return ll, prob.scale


def depth_loglik(kets, rho, counts, included):
    cdef _Problem prob = _setup(DEPTH, kets)
    prob.n = np.array(counts, dtype=float, order='C')
    prob.incl = np.array(included, dtype=np.uint8, order='C')
    return prob.evaluate(np.array(rho, dtype=complex, order='C'), 0.0)
