"""Particle Gibbs with ancestor sampling for the latent copula path.

The sweep itself runs in a compiled kernel when available (see
:mod:`dgev._backend`); the functions here are the single-particle building
blocks, used directly by tests and to prepare kernel inputs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from dgev import _backend
from dgev._csmc_py import OBS_GEV, OBS_IDENTITY, ParticleSystem  # noqa: F401
from dgev.model import DatasetSpec, ModelParams, seasonal_term, time_grid
from dgev.special import inverse_obs, obs_mean, obs_mean_deriv

logger = logging.getLogger(__name__)

LINEARIZED = "linearized"
INVERSE_T = "inverse_transform_t"

_LOG_2PI = math.log(2.0 * math.pi)


class DegenerateWeightsError(RuntimeError):
    def __init__(self, t, max_log_weight, ess):
        self.t = t
        self.max_log_weight = max_log_weight
        self.ess = ess
        super().__init__(f"degenerate particle weights at t={t} "
                         f"(max log-weight {max_log_weight}, ESS {ess})")


@dataclass(frozen=True)
class ProposalConfig:
    kind: str = INVERSE_T
    c: float = 1.0
    t_df: int = 5
    t_scale_floor: float = 1e-3

    def __post_init__(self):
        if self.kind not in (LINEARIZED, INVERSE_T):
            raise ValueError(f"unknown proposal kind {self.kind!r}")
        if not self.c >= 1.0:
            raise ValueError("linearisation constant c must be >= 1")
        if not self.t_df >= 1:
            raise ValueError("t_df must be >= 1")
        if not self.t_scale_floor > 0:
            raise ValueError("t_scale_floor must be positive")


@dataclass
class SweepResult:
    path: np.ndarray
    ess: np.ndarray
    c_events: int
    system: ParticleSystem | None = None


def _f_and_deriv(b, params: ModelParams, obs_kind):
    if obs_kind == OBS_IDENTITY:
        return b, 1.0
    return obs_mean(b, params.gev), obs_mean_deriv(b, params.gev)


def propose_linearized(beta_prev, y_t, t, params: ModelParams, cfg: ProposalConfig,
                       rng: np.random.Generator, *, obs_kind=OBS_GEV, c=None):
    """Gaussian proposal from linearising the observation around phi*beta_prev.

    ``beta_prev=None`` selects the stationary N(0, 1) prior for t = 1.
    Returns ``(draw, log_q, (nu, tau2))``.
    """
    if beta_prev is None:
        m, pv = 0.0, 1.0
    else:
        m, pv = params.phi * beta_prev, 1.0 - params.phi ** 2
    c = cfg.c if c is None else c
    fm, dfm = _f_and_deriv(m, params, obs_kind)
    s = dfm / c
    y_adj = y_t - float(seasonal_term(t, params.seasonal))
    tau2 = 1.0 / (1.0 / pv + s * s / params.sigma2)
    nu = tau2 * (m / pv + s * (y_adj - fm + s * m) / params.sigma2)
    draw = nu + math.sqrt(tau2) * rng.standard_normal()
    log_q = -0.5 * (_LOG_2PI + math.log(tau2)) - (draw - nu) ** 2 / (2.0 * tau2)
    return draw, log_q, (nu, tau2)


def inverse_t_center(y_t, t, params: ModelParams, cfg: ProposalConfig, obs_kind=OBS_GEV):
    """(beta_hat, scale) of the inverse-transform t proposal; beta_hat is None off-support."""
    y_adj = np.asarray(y_t, dtype=float) - seasonal_term(t, params.seasonal)
    sigma = math.sqrt(params.sigma2)
    if obs_kind == OBS_IDENTITY:
        bh = y_adj
        scale = np.maximum(sigma, cfg.t_scale_floor) * np.ones_like(bh)
    else:
        bh = np.atleast_1d(inverse_obs(np.atleast_1d(y_adj), params.gev))
        scale = np.full(bh.shape, np.nan)
        ok = ~np.isnan(bh)
        scale[ok] = np.maximum(sigma / obs_mean_deriv(bh[ok], params.gev), cfg.t_scale_floor)
    if np.ndim(y_t) == 0:
        b, s = float(np.ravel(bh)[0]), float(np.ravel(scale)[0])
        return (None, None) if math.isnan(b) else (b, s)
    return bh, scale


def t_log_density(x, center, scale, df):
    return stats.t.logpdf((x - center) / scale, df) - math.log(scale)


def propose_inverse_t(y_t, t, params: ModelParams, cfg: ProposalConfig,
                      rng: np.random.Generator, *, beta_prev=None, obs_kind=OBS_GEV, scale=None):
    """Student-t proposal centred at the noise-free inverse of y_t.

    Falls back to :func:`propose_linearized` when y_t is outside the GEV
    support.  Returns ``(draw, log_q)``.
    """
    bh, sc_t = inverse_t_center(y_t, t, params, cfg, obs_kind)
    if bh is None:
        draw, lq, _ = propose_linearized(beta_prev, y_t, t, params, cfg, rng, obs_kind=obs_kind)
        return draw, lq
    if scale is not None:
        sc_t = scale
    draw = bh + sc_t * rng.standard_t(cfg.t_df)
    return draw, float(t_log_density(draw, bh, sc_t, cfg.t_df))


def _check_weights(weights):
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0) or not w.sum() > 0:
        raise DegenerateWeightsError(-1, float("nan"), 0.0)
    return w


def multinomial_resample(weights, count, rng: np.random.Generator):
    """``count`` i.i.d. indices drawn with probabilities ``weights``."""
    w = _check_weights(weights)
    cw = np.cumsum(w)
    idx = np.searchsorted(cw, rng.random(count) * cw[-1], side="right")
    return np.minimum(idx, w.size - 1)


def log_normalize(log_w):
    """Normalised weights from log weights via log-sum-exp."""
    log_w = np.asarray(log_w, dtype=float)
    mx = np.max(log_w)
    if not np.isfinite(mx):
        raise DegenerateWeightsError(-1, float(mx), 0.0)
    w = np.exp(log_w - mx)
    return w / w.sum()


def ancestor_sample(ref_beta_t, prev_particles, log_weights, phi, rng: np.random.Generator):
    """Parent index for the reference particle, prop. to w * N(ref; phi*prev, 1-phi^2)."""
    prev = np.asarray(prev_particles, dtype=float)
    la = np.asarray(log_weights, dtype=float) - (ref_beta_t - phi * prev) ** 2 / (2.0 * (1.0 - phi * phi))
    W = log_normalize(la)
    return int(multinomial_resample(W, 1, rng)[0])


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / float(w @ w)


def csmc_sweep(data: DatasetSpec, reference, params: ModelParams, n_particles: int,
               cfg: ProposalConfig, rng: np.random.Generator, *, obs_kind=OBS_GEV,
               backend=None, trace=False) -> SweepResult:
    """One conditional SMC sweep with ancestor sampling; returns the new path.

    Raises :class:`DegenerateWeightsError` if the weights at some t are all
    zero or non-finite.
    """
    if n_particles < 2:
        raise ValueError("n_particles must be >= 2")
    ref = np.ascontiguousarray(reference, dtype=float)
    T = data.T
    if ref.size != T:
        raise ValueError("reference length must equal data length")
    t_pos = time_grid(T)
    y_adj = np.ascontiguousarray(data.y - seasonal_term(t_pos, params.seasonal))
    nf = n_particles - 1
    use_t = cfg.kind == INVERSE_T
    if use_t:
        bh, scale = inverse_t_center(y_adj, t_pos, params.with_(seasonal=None), cfg, obs_kind)
        bh = np.ascontiguousarray(bh, dtype=float)
        scale = np.ascontiguousarray(np.nan_to_num(scale, nan=1.0), dtype=float)
    else:
        bh = np.full(T, np.nan)
        scale = np.ones(T)
    z = rng.standard_normal((T, nf))
    tmult = np.sqrt(cfg.t_df / rng.chisquare(cfg.t_df, (T, nf))) if use_t else None
    u_res = rng.random((T, nf))
    u_anc = rng.random(T)
    u_final = float(rng.random())
    kernel = _backend.get_kernel(backend)
    gev = params.gev
    path, ess, n_c, status, bad, system = kernel(
        y_adj, ref, float(gev.mu), float(gev.psi), float(gev.xi), float(params.phi),
        float(params.sigma2), int(obs_kind), bool(use_t), float(cfg.c), float(cfg.t_df),
        bh, scale, z, tmult, u_res, u_anc, u_final, trace)
    if status:
        t = status - 1
        raise DegenerateWeightsError(t + 1, bad, float(ess[t - 1]) if t > 0 else 0.0)
    if n_c:
        logger.debug("linearisation constant doubled %d time(s) during sweep", n_c)
    return SweepResult(np.asarray(path), np.asarray(ess), int(n_c), system)
