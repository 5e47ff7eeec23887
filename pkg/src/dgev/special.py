"""Scalar/vectorised kernels for the normal, Gumbel and GEV families.

All functions accept scalars or numpy arrays and broadcast like ufuncs.
The GEV shape limit is handled explicitly: for ``|xi| < XI_LIMIT`` the
Gumbel branch is used, otherwise ``expm1``/``log1p`` forms keep the
``(x**-xi - 1) / xi`` ratio free of cancellation for small ``xi``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import special as sc

XI_LIMIT = 1e-8

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class GevParams(NamedTuple):
    """Location ``mu``, scale ``psi`` (> 0) and shape ``xi``."""

    mu: float
    psi: float
    xi: float


def _check_finite(x, name="x"):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("probability must lie strictly inside (0, 1)")
    return p


def _check_params(params: GevParams):
    if not params.psi > 0:
        raise ValueError(f"GEV scale must be positive, got {params.psi}")


def _ret(x):
    return x.item() if np.ndim(x) == 0 else x


_SQRT1_2 = 1.0 / np.sqrt(2.0)
TAIL_CUT = -20.0
# (2k-1)!! coefficients of the Mills-ratio series, alternating sign
_TAIL_COEF = np.array([1.0, -1.0, 3.0, -15.0, 105.0, -945.0, 10395.0,
                       -135135.0, 2027025.0, -34459425.0])


def _log_cdf_tail(x):
    """Asymptotic log Phi(x) for x << 0."""
    inv2 = 1.0 / (x * x)
    series = np.polynomial.polynomial.polyval(inv2, _TAIL_COEF)
    return -0.5 * x * x - np.log(-x) - _LOG_SQRT_2PI + np.log(series)


def norm_logcdf(x):
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape)
    pos = x > 0.0
    tail = x < TAIL_CUT
    mid = ~(pos | tail)
    out[pos] = np.log1p(-0.5 * sc.erfc(x[pos] * _SQRT1_2))
    out[mid] = np.log(0.5 * sc.erfc(-x[mid] * _SQRT1_2))
    out[tail] = _log_cdf_tail(x[tail])
    return out


def std_normal_log_cdf(x):
    """log Phi(x), accurate in both tails (finite down to x = -40 and beyond)."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return _ret(norm_logcdf(x))


def std_normal_cdf(x):
    x = np.asarray(x, dtype=float)
    return _ret(sc.ndtr(x))


def std_normal_log_pdf(x):
    x = np.asarray(x, dtype=float)
    return _ret(-0.5 * x * x - _LOG_SQRT_2PI)


def std_normal_inv_cdf(p):
    """Phi^{-1}(p) for p in (0, 1)."""
    p = _check_prob(p)
    return _ret(sc.ndtri(p))


def std_normal_inv_log_cdf(log_p):
    """Phi^{-1}(exp(log_p)); usable when exp(log_p) underflows."""
    log_p = np.asarray(log_p, dtype=float)
    if np.any(~(log_p < 0.0)):
        raise ValueError("log probability must be negative")
    return _ret(sc.ndtri_exp(log_p))


def gumbel_cdf(alpha):
    alpha = np.asarray(alpha, dtype=float)
    return _ret(np.exp(-np.exp(-alpha)))


def gumbel_inv(p):
    p = _check_prob(p)
    return _ret(-np.log(-np.log(p)))


def _gev_log_cdf(y, params: GevParams):
    """log F(y); -inf below the lower endpoint, 0 above the upper endpoint."""
    mu, psi, xi = params
    s = (np.asarray(y, dtype=float) - mu) / psi
    if abs(xi) < XI_LIMIT:
        return -np.exp(-s)
    arg = xi * s
    with np.errstate(divide="ignore", invalid="ignore"):
        # log z^{-1/xi} with z = 1 + xi*s
        log_t = -np.log1p(arg) / xi
        out = -np.exp(log_t)
    outside = arg <= -1.0
    if np.any(outside):
        out = np.where(outside, -np.inf if xi > 0 else 0.0, out)
    return out


def gev_cdf(y, params: GevParams):
    """GEV distribution function exp{-(1 + xi (y - mu)/psi)_+^{-1/xi}}."""
    _check_params(params)
    return _ret(np.exp(_gev_log_cdf(y, params)))


def log_neg_log_cdf(beta):
    """log(-log Phi(beta)) without underflow in either tail."""
    beta = np.asarray(beta, dtype=float)
    out = np.empty(beta.shape)
    neg = beta <= 0.0
    out[neg] = np.log(-norm_logcdf(beta[neg]))
    b = beta[~neg]
    q = 0.5 * sc.erfc(b * _SQRT1_2)
    big = q > 1e-300
    res = np.empty(b.shape)
    # -log Phi(b) = -log1p(-q)
    res[big] = np.log(-np.log1p(-q[big]))
    res[~big] = _log_cdf_tail(-b[~big])
    out[~neg] = res
    return out


def _shape_ratio(log_l, xi):
    """(L^{-xi} - 1) / xi evaluated from log L."""
    if abs(xi) < XI_LIMIT:
        return -log_l
    return np.expm1(-xi * log_l) / xi


def obs_mean(beta, params: GevParams):
    """Noise-free observation mu + psi ((-log Phi(beta))^{-xi} - 1) / xi."""
    beta = np.asarray(beta, dtype=float)
    _check_finite(beta, "beta")
    log_l = log_neg_log_cdf(beta)
    return _ret(params.mu + params.psi * _shape_ratio(log_l, params.xi))


def obs_mean_deriv(beta, params: GevParams):
    """d obs_mean / d beta = psi L^{-xi-1} phi(beta) / Phi(beta), L = -log Phi(beta)."""
    beta = np.asarray(beta, dtype=float)
    _check_finite(beta, "beta")
    log_phi_cdf = norm_logcdf(beta)
    log_l = log_neg_log_cdf(beta)
    log_d = (np.log(params.psi) - (params.xi + 1.0) * log_l
             - 0.5 * beta * beta - _LOG_SQRT_2PI - log_phi_cdf)
    return _ret(np.exp(log_d))


def inverse_obs(y, params: GevParams):
    """Latent value whose noise-free observation equals ``y``.

    Returns NaN (array input) or None (scalar input) where ``y`` lies
    outside the GEV support.
    """
    log_f = np.asarray(_gev_log_cdf(y, params), dtype=float)
    out = np.full(log_f.shape, np.nan)
    ok = np.isfinite(log_f) & (log_f < 0.0)
    lf = log_f[ok]
    # upper half: Phi^{-1}(F) = -Phi^{-1}(1 - F), 1 - F = -expm1(log F)
    upper = lf > -np.log(2.0)
    res = np.empty(lf.shape)
    res[upper] = -sc.ndtri(-np.expm1(lf[upper]))
    res[~upper] = sc.ndtri_exp(lf[~upper])
    out[ok] = res
    if out.ndim == 0:
        v = out.item()
        return None if np.isnan(v) else v
    return out
