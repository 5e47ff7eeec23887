"""Parameter containers, priors and log densities of the dGEV model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from dgev.special import GevParams, XI_LIMIT, log_neg_log_cdf

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Seasonal:
    """Location sinusoid a1 cos(omega t) + a2 sin(omega t)."""

    a1: float = 0.0
    a2: float = 0.0
    omega: float = 2.0 * math.pi / 365.25

    @classmethod
    def from_freq(cls, freq: float, a1: float = 0.0, a2: float = 0.0) -> "Seasonal":
        return cls(a1=a1, a2=a2, omega=2.0 * math.pi * freq)


@dataclass(frozen=True)
class ModelParams:
    gev: GevParams
    phi: float
    sigma2: float
    seasonal: Optional[Seasonal] = None

    def __post_init__(self):
        if not abs(self.phi) < 1.0:
            raise ValueError(f"|phi| must be < 1, got {self.phi}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.gev.psi > 0:
            raise ValueError(f"psi must be positive, got {self.gev.psi}")
        if self.seasonal is not None and not self.seasonal.omega > 0:
            raise ValueError("seasonal omega must be positive")

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class Priors:
    """Hyperparameters; psi ~ Gamma(shape, rate), sigma2 ~ InvGamma(a, b)."""

    mu_mean: float = 0.0
    mu_var: float = 4.0
    psi_shape: float = 2.0
    psi_rate: float = 2.0
    xi_mean: float = 0.0
    xi_var: float = 4.0
    sigma2_a: float = 1.0
    sigma2_b: float = 0.01
    a1_var: float = 100.0
    a2_var: float = 100.0

    def __post_init__(self):
        for name in ("mu_var", "psi_shape", "psi_rate", "xi_var",
                     "sigma2_a", "sigma2_b", "a1_var", "a2_var"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"prior hyperparameter {name} must be positive, got {v}")
        if not (math.isfinite(self.mu_mean) and math.isfinite(self.xi_mean)):
            raise ValueError("prior means must be finite")


@dataclass
class DatasetSpec:
    y: np.ndarray
    time_index: Sequence = field(default=None)
    freq: Optional[float] = None
    standardization: Optional[tuple] = None  # (mean, sd)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.time_index is None:
            self.time_index = list(range(1, self.y.size + 1))
        if len(self.time_index) != self.y.size:
            raise ValueError("time_index and y lengths differ")
        if self.standardization is not None and not self.standardization[1] > 0:
            raise ValueError("standardization sd must be positive")

    @property
    def T(self) -> int:
        return self.y.size


def time_grid(T: int) -> np.ndarray:
    """Positions t = 1..T used by the sinusoid terms."""
    return np.arange(1, T + 1, dtype=float)


def seasonal_term(t, seasonal: Optional[Seasonal]):
    if seasonal is None:
        return np.zeros_like(np.asarray(t, dtype=float))
    t = np.asarray(t, dtype=float)
    return seasonal.a1 * np.cos(seasonal.omega * t) + seasonal.a2 * np.sin(seasonal.omega * t)


def gev_curve(log_l, gev: GevParams):
    """mu + psi (L^{-xi} - 1)/xi given log L = log(-log Phi(beta))."""
    mu, psi, xi = gev
    if abs(xi) < XI_LIMIT:
        return mu - psi * log_l
    return mu + psi * np.expm1(-xi * log_l) / xi


def mean_at(t, beta_t, params: ModelParams):
    """Observation mean at time position(s) ``t`` for latent value(s) ``beta_t``."""
    base = gev_curve(log_neg_log_cdf(beta_t), params.gev)
    out = base + seasonal_term(t, params.seasonal)
    return out.item() if np.ndim(out) == 0 else out


def log_lik_obs(y_t, beta_t, t, params: ModelParams):
    resid = np.asarray(y_t, dtype=float) - mean_at(t, beta_t, params)
    out = -0.5 * (_LOG_2PI + math.log(params.sigma2)) - resid * resid / (2.0 * params.sigma2)
    return out.item() if np.ndim(out) == 0 else out


def _log_normal(x, mean, var):
    return -0.5 * (_LOG_2PI + math.log(var)) - (x - mean) ** 2 / (2.0 * var)


def log_prior_theta(theta: GevParams, priors: Priors) -> float:
    mu, psi, xi = theta
    if not psi > 0:
        return -math.inf
    lg = (priors.psi_shape * math.log(priors.psi_rate) - math.lgamma(priors.psi_shape)
          + (priors.psi_shape - 1.0) * math.log(psi) - priors.psi_rate * psi)
    return (_log_normal(mu, priors.mu_mean, priors.mu_var) + lg
            + _log_normal(xi, priors.xi_mean, priors.xi_var))


class ThetaTarget:
    """Conditional log posterior of (mu, psi, xi) with beta, sigma2, a held fixed.

    ``log L`` and the de-seasonalised data are cached once so that each
    evaluation costs one exp over T.
    """

    def __init__(self, data: DatasetSpec, beta, params: ModelParams, priors: Priors):
        beta = np.asarray(beta, dtype=float)
        if beta.size != data.T:
            raise ValueError("beta length must equal data length")
        self.priors = priors
        self.sigma2 = params.sigma2
        self.y_adj = data.y - seasonal_term(time_grid(data.T), params.seasonal)
        self.log_l = log_neg_log_cdf(beta)

    def __call__(self, theta) -> float:
        mu, psi, xi = (float(v) for v in theta)
        if not psi > 0 or not all(map(math.isfinite, (mu, psi, xi))):
            return -math.inf
        resid = self.y_adj - gev_curve(self.log_l, GevParams(mu, psi, xi))
        ll = -0.5 * float(resid @ resid) / self.sigma2
        return ll + log_prior_theta(GevParams(mu, psi, xi), self.priors)


def log_post_theta(theta, data: DatasetSpec, beta, params: ModelParams, priors: Priors) -> float:
    """Sum of observation log likelihoods plus log priors, up to a theta-free constant."""
    return ThetaTarget(data, beta, params, priors)(theta)


def ar1_sums(beta):
    """(sum b_{t-1}^2, sum b_t b_{t-1}, sum b_t^2) over t = 2..T."""
    beta = np.asarray(beta, dtype=float)
    prev, cur = beta[:-1], beta[1:]
    return float(prev @ prev), float(cur @ prev), float(cur @ cur), beta.size - 1


def log_post_phi(phi: float, beta=None, *, sums=None) -> float:
    """Exact AR(1) conditional log likelihood of beta_{2:T} given beta_1, plus uniform prior."""
    if not abs(phi) < 1.0:
        return -math.inf
    s00, s01, s11, n = sums if sums is not None else ar1_sums(beta)
    v = 1.0 - phi * phi
    ss = s11 - 2.0 * phi * s01 + phi * phi * s00
    return -0.5 * n * math.log(v) - ss / (2.0 * v) - math.log(2.0)


def residuals(data: DatasetSpec, beta, params: ModelParams) -> np.ndarray:
    return data.y - mean_at(time_grid(data.T), beta, params)


def sigma2_posterior_params(data: DatasetSpec, beta, params: ModelParams, priors: Priors):
    """Inverse-gamma (shape, rate) of the sigma2 full conditional."""
    r = residuals(data, beta, params)
    return priors.sigma2_a + 0.5 * data.T, priors.sigma2_b + 0.5 * float(r @ r)


def seasonal_design(T: int, omega: float) -> np.ndarray:
    t = time_grid(T)
    return np.column_stack([np.cos(omega * t), np.sin(omega * t)])


def seasonal_posterior_params(data: DatasetSpec, beta, params: ModelParams, priors: Priors):
    """Mean and covariance of the Gaussian full conditional of (a1, a2)."""
    if params.seasonal is None:
        raise ValueError("seasonal component is not active")
    P = seasonal_design(data.T, params.seasonal.omega)
    target = data.y - gev_curve(log_neg_log_cdf(beta), params.gev)
    s2 = params.sigma2
    prec = (P.T @ P + s2 * np.diag([1.0 / priors.a1_var, 1.0 / priors.a2_var])) / s2
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (P.T @ target) / s2
    return mean, cov
