# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled conditional SMC kernel; mirrors :func:`dgev._csmc_py.csmc_kernel`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, expm1, sqrt, erfc, isnan, isfinite, lgamma, M_PI, INFINITY

cnp.import_array()

cdef double LOG_2PI = log(2.0 * M_PI)
cdef double C_MAX = 32.0
cdef double C_TRIGGER_W = 0.999
cdef int C_TRIGGER_RUN = 3


cdef double SQRT1_2 = 0.7071067811865476
cdef double TAIL_CUT = -20.0
cdef double[10] TAIL_COEF = [1.0, -1.0, 3.0, -15.0, 105.0, -945.0, 10395.0,
                             -135135.0, 2027025.0, -34459425.0]


cdef inline double _log_cdf_tail(double x) noexcept nogil:
    cdef double inv2 = 1.0 / (x * x)
    cdef double acc = 0.0
    cdef int k
    for k in range(9, -1, -1):
        acc = acc * inv2 + TAIL_COEF[k]
    return -0.5 * x * x - log(-x) - 0.5 * LOG_2PI + log(acc)


cdef inline double _log_cdf(double x) noexcept nogil:
    if x > 0.0:
        return log1p(-0.5 * erfc(x * SQRT1_2))
    if x < TAIL_CUT:
        return _log_cdf_tail(x)
    return log(0.5 * erfc(-x * SQRT1_2))


cdef inline double _log_l(double b) noexcept nogil:
    cdef double q
    if b <= 0.0:
        return log(-_log_cdf(b))
    q = 0.5 * erfc(b * SQRT1_2)
    if q > 1e-300:
        return log(-log1p(-q))
    return _log_cdf_tail(-b)


cdef inline double _f(double b, double mu, double psi, double xi, int obs_kind) noexcept nogil:
    cdef double ll
    if obs_kind == 1:
        return b
    ll = _log_l(b)
    if xi < 1e-8 and xi > -1e-8:
        return mu - psi * ll
    return mu + psi * expm1(-xi * ll) / xi


cdef inline double _fprime(double b, double mu, double psi, double xi, int obs_kind) noexcept nogil:
    if obs_kind == 1:
        return 1.0
    return exp(log(psi) - (xi + 1.0) * _log_l(b) - 0.5 * b * b - 0.5 * LOG_2PI - _log_cdf(b))


cdef inline Py_ssize_t _search(double[::1] cw, Py_ssize_t n, double target) noexcept nogil:
    # first i with cw[i] > target
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cw[mid] > target:
            hi = mid
        else:
            lo = mid + 1
    if lo > n - 1:
        lo = n - 1
    return lo


def csmc_kernel(double[::1] y, double[::1] ref, double mu, double psi, double xi,
                double phi, double sigma2, int obs_kind, bint use_t, double c0, double t_df,
                double[::1] beta_hat, double[::1] t_scale, double[:, ::1] z, tmult_obj,
                double[:, ::1] u_res, double[::1] u_anc, double u_final, bint trace=False):
    cdef Py_ssize_t T = y.shape[0]
    cdef Py_ssize_t Nf = z.shape[1]
    cdef Py_ssize_t N = Nf + 1
    cdef Py_ssize_t t, l, k, ja
    cdef double v = 1.0 - phi * phi
    cdef double lognorm_obs = -0.5 * (LOG_2PI + log(sigma2))
    cdef double t_const = lgamma(0.5 * (t_df + 1.0)) - lgamma(0.5 * t_df) - 0.5 * log(t_df * M_PI)
    cdef double c = c0
    cdef int run = 0, n_c = 0
    cdef double pv, lpv, lsc, yt, bh, sc_t, mx, x, b, m, s, fm, tau2, nu, lq, r, lw_l, u, total, sw2, wmax
    cdef bint method_t
    cdef double[:, ::1] tmult
    if use_t:
        tmult = tmult_obj

    parts_a = np.empty((T, N))
    anc_a = np.zeros((T, N), dtype=np.intp)
    ess_a = np.empty(T)
    cdef double[:, ::1] parts = parts_a
    cdef Py_ssize_t[:, ::1] anc = anc_a
    cdef double[::1] ess = ess_a
    cdef double[::1] lw = np.empty(N)
    cdef double[::1] lw_prev = np.empty(N)
    cdef double[::1] cw = np.empty(N)
    cdef double[::1] cw_prev = np.empty(N)
    cdef double[::1] la = np.empty(N)
    cdef double[::1] tmp
    if trace:
        lws_a = np.empty((T, N))
        Ws_a = np.empty((T, N))
    cdef double[:, ::1] lws
    cdef double[:, ::1] Ws
    if trace:
        lws = lws_a
        Ws = Ws_a

    for t in range(T):
        yt = y[t]
        bh = beta_hat[t]
        method_t = use_t and not isnan(bh)
        if t == 0:
            pv = 1.0
        else:
            pv = v
            total = cw_prev[N - 1]
            for l in range(Nf):
                anc[t, l] = _search(cw_prev, N, u_res[t, l] * total)
            mx = -INFINITY
            for l in range(N):
                b = ref[t] - phi * parts[t - 1, l]
                la[l] = lw_prev[l] - b * b / (2.0 * v)
                if la[l] > mx:
                    mx = la[l]
            total = 0.0
            for l in range(N):
                total += exp(la[l] - mx)
                la[l] = total
            ja = _search(la, N, u_anc[t] * total)
            anc[t, Nf] = ja
        lpv = -0.5 * (LOG_2PI + log(pv))
        if method_t:
            sc_t = t_scale[t]
            lsc = t_const - log(sc_t)
        mx = -INFINITY
        for l in range(N):
            if t == 0:
                m = 0.0
            else:
                m = phi * parts[t - 1, anc[t, l]]
            if method_t:
                if l < Nf:
                    x = bh + sc_t * z[t, l] * tmult[t, l]
                else:
                    x = ref[t]
                u = (x - bh) / sc_t
                lq = lsc - 0.5 * (t_df + 1.0) * log1p(u * u / t_df)
            else:
                s = _fprime(m, mu, psi, xi, obs_kind) / c
                fm = _f(m, mu, psi, xi, obs_kind)
                tau2 = 1.0 / (1.0 / pv + s * s / sigma2)
                nu = tau2 * (m / pv + s * (yt - fm + s * m) / sigma2)
                if l < Nf:
                    x = nu + sqrt(tau2) * z[t, l]
                else:
                    x = ref[t]
                lq = -0.5 * (LOG_2PI + log(tau2)) - (x - nu) * (x - nu) / (2.0 * tau2)
            r = yt - _f(x, mu, psi, xi, obs_kind)
            lw_l = (lognorm_obs - r * r / (2.0 * sigma2)
                    + lpv - (x - m) * (x - m) / (2.0 * pv) - lq)
            parts[t, l] = x
            lw[l] = lw_l
            if isnan(lw_l):
                return None, ess_a, n_c, t + 1, lw_l, None
            if lw_l > mx:
                mx = lw_l
        if not isfinite(mx):
            return None, ess_a, n_c, t + 1, mx, None
        total = 0.0
        for l in range(N):
            la[l] = exp(lw[l] - mx)
            total += la[l]
            cw[l] = total
        sw2 = 0.0
        wmax = 0.0
        for l in range(N):
            u = la[l] / total
            sw2 += u * u
            if u > wmax:
                wmax = u
            if trace:
                lws[t, l] = lw[l]
                Ws[t, l] = u
        ess[t] = 1.0 / sw2
        if wmax > C_TRIGGER_W:
            run += 1
            if run >= C_TRIGGER_RUN and c < C_MAX:
                c = 2.0 * c
                if c > C_MAX:
                    c = C_MAX
                n_c += 1
                run = 0
        else:
            run = 0
        tmp = lw_prev
        lw_prev = lw
        lw = tmp
        tmp = cw_prev
        cw_prev = cw
        cw = tmp

    k = _search(cw_prev, N, u_final * cw_prev[N - 1])
    path_a = np.empty(T)
    cdef double[::1] path = path_a
    for t in range(T - 1, -1, -1):
        path[t] = parts[t, k]
        k = anc[t, k]
    system = None
    if trace:
        from dgev._csmc_py import ParticleSystem
        system = ParticleSystem(parts_a, lws_a, Ws_a, anc_a.astype(np.int64), np.asarray(ref).copy())
    return path_a, ess_a, n_c, 0, 0.0, system
