"""Pure numpy conditional SMC kernel with ancestor sampling.

Reference implementation and fallback for :mod:`dgev._csmc`.  Both take
the same pre-drawn random arrays, so given identical inputs they walk the
same particle genealogy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dgev.special import norm_logcdf, log_neg_log_cdf

OBS_GEV = 0
OBS_IDENTITY = 1

C_MAX = 32.0
C_TRIGGER_W = 0.999
C_TRIGGER_RUN = 3

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ParticleSystem:
    particles: np.ndarray   # (T, N)
    log_weights: np.ndarray  # (T, N)
    normalized_weights: np.ndarray  # (T, N)
    ancestors: np.ndarray   # (T, N), row 0 unused
    reference: np.ndarray   # (T,)


def obs_f(b, mu, psi, xi, obs_kind):
    if obs_kind == OBS_IDENTITY:
        return np.asarray(b, dtype=float)
    ll = log_neg_log_cdf(b)
    if abs(xi) < 1e-8:
        return mu - psi * ll
    return mu + psi * np.expm1(-xi * ll) / xi


def obs_fprime(b, mu, psi, xi, obs_kind):
    b = np.asarray(b, dtype=float)
    if obs_kind == OBS_IDENTITY:
        return np.ones_like(b)
    lcdf = norm_logcdf(b)
    return np.exp(math.log(psi) - (xi + 1.0) * log_neg_log_cdf(b) - 0.5 * b * b
                  - 0.5 * _LOG_2PI - lcdf)


def _t_logpdf_const(df):
    return math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df) - 0.5 * math.log(df * math.pi)


def _normalize(lw):
    mx = np.max(lw)
    w = np.exp(lw - mx)
    cw = np.cumsum(w)
    W = w / cw[-1]
    return W, cw, mx


def csmc_kernel(y, ref, mu, psi, xi, phi, sigma2, obs_kind, use_t, c0, t_df,
                beta_hat, t_scale, z, tmult, u_res, u_anc, u_final, trace=False):
    """Run one sweep; returns ``(path, ess, n_c_events, status, bad_max_logw, system)``.

    ``status`` is 0 on success, else 1 + the (0-based) time index at which
    the weights degenerated.  ``system`` is a :class:`ParticleSystem` when
    ``trace`` is set, else None.
    """
    T = y.size
    Nf = z.shape[1]
    N = Nf + 1
    v = 1.0 - phi * phi
    lognorm_obs = -0.5 * (_LOG_2PI + math.log(sigma2))
    t_const = _t_logpdf_const(t_df)
    parts = np.empty((T, N))
    anc = np.zeros((T, N), dtype=np.int64)
    ess = np.empty(T)
    if trace:
        lws = np.empty((T, N))
        Ws = np.empty((T, N))
    c = c0
    run = 0
    n_c = 0
    lw_prev = cw_prev = None
    for t in range(T):
        if t == 0:
            prev_vals = np.zeros(N)
            m = np.zeros(N)
            pv = 1.0
        else:
            cw = cw_prev
            idx = np.searchsorted(cw, u_res[t] * cw[-1], side="right")
            np.minimum(idx, N - 1, out=idx)
            prev = parts[t - 1]
            la = lw_prev - (ref[t] - phi * prev) ** 2 / (2.0 * v)
            Wa, cwa, _ = _normalize(la)
            ja = int(np.searchsorted(cwa, u_anc[t] * cwa[-1], side="right"))
            ja = min(ja, N - 1)
            anc[t, :Nf] = idx
            anc[t, Nf] = ja
            prev_vals = prev[anc[t]]
            m = phi * prev_vals
            pv = v
        yt = y[t]
        bh = beta_hat[t]
        if use_t and not math.isnan(bh):
            sc_t = t_scale[t]
            draws = bh + sc_t * z[t] * tmult[t]
            x = np.append(draws, ref[t])
            u = (x - bh) / sc_t
            log_q = t_const - 0.5 * (t_df + 1.0) * np.log1p(u * u / t_df) - math.log(sc_t)
        else:
            s = obs_fprime(m, mu, psi, xi, obs_kind) / c
            fm = obs_f(m, mu, psi, xi, obs_kind)
            prec = 1.0 / pv + s * s / sigma2
            tau2 = 1.0 / prec
            nu = tau2 * (m / pv + s * (yt - fm + s * m) / sigma2)
            sd = np.sqrt(tau2)
            x = np.append(nu[:Nf] + sd[:Nf] * z[t], ref[t])
            log_q = -0.5 * (_LOG_2PI + np.log(tau2)) - (x - nu) ** 2 / (2.0 * tau2)
        r = yt - obs_f(x, mu, psi, xi, obs_kind)
        ll = lognorm_obs - r * r / (2.0 * sigma2)
        lp = -0.5 * (_LOG_2PI + math.log(pv)) - (x - m) ** 2 / (2.0 * pv)
        lw = ll + lp - log_q
        parts[t] = x
        mx = np.max(lw)
        if not np.isfinite(mx) or np.any(np.isnan(lw)):
            return None, ess, n_c, t + 1, float(mx), None
        W, cw, _ = _normalize(lw)
        ess[t] = 1.0 / float(W @ W)
        if trace:
            lws[t] = lw
            Ws[t] = W
        if W.max() > C_TRIGGER_W:
            run += 1
            if run >= C_TRIGGER_RUN and c < C_MAX:
                c = min(2.0 * c, C_MAX)
                n_c += 1
                run = 0
        else:
            run = 0
        lw_prev, cw_prev = lw, cw
    k = int(np.searchsorted(cw_prev, u_final * cw_prev[-1], side="right"))
    k = min(k, N - 1)
    path = np.empty(T)
    for t in range(T - 1, -1, -1):
        path[t] = parts[t, k]
        k = anc[t, k]
    system = ParticleSystem(parts, lws, Ws, anc, np.asarray(ref).copy()) if trace else None
    return path, ess, n_c, 0, 0.0, system
