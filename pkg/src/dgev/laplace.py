"""Mode finding, Laplace proposals and independence Metropolis-Hastings steps."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

logger = logging.getLogger(__name__)

MAX_ITER = 200
GRAD_TOL = 1e-6
RIDGE_START = 1e-8
RIDGE_MAX = 1e8


class ProposalError(RuntimeError):
    """Raised when a negative Hessian cannot be repaired into a PD matrix."""


@dataclass
class ModeResult:
    mode: np.ndarray
    neg_hessian: np.ndarray
    gradient: np.ndarray
    value: float
    converged: bool
    n_iter: int


def _step(x):
    return 1e-4 * (1.0 + np.abs(x))


def fd_gradient(f: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = _step(x)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h[i])
    return g


def fd_neg_hessian(f: Callable, x: np.ndarray, fx: float | None = None) -> np.ndarray:
    """Central-difference estimate of -d2f/dx2, symmetrised."""
    x = np.asarray(x, dtype=float)
    d = x.size
    h = _step(x)
    fx = f(x) if fx is None else fx
    H = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * fx + f(x - ei)) / (h[i] * h[i])
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej)
                                 - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h[i] * h[j])
    H = -H
    return 0.5 * (H + H.T)


def find_mode(logpost: Callable, init, max_iter: int = MAX_ITER) -> ModeResult:
    """Maximise ``logpost`` by BFGS with central-difference gradients.

    A final Newton polish (with the finite-difference Hessian) is applied
    when BFGS stops short of the gradient tolerance.  ``converged`` is
    False if the tolerance is still not met; the best point is returned.
    """
    x0 = np.atleast_1d(np.asarray(init, dtype=float))
    f0 = logpost(x0)
    if not np.isfinite(f0):
        raise ValueError("log posterior is not finite at the initial point")

    def neg(x):
        v = logpost(x)
        return -v if np.isfinite(v) else 1e300

    res = optimize.minimize(neg, x0, jac=lambda x: -fd_gradient(logpost, x),
                            method="BFGS", options={"maxiter": max_iter, "gtol": GRAD_TOL})
    x = res.x
    fx = logpost(x)
    if not np.isfinite(fx) or fx < f0:
        x, fx = x0, f0
    g = fd_gradient(logpost, x)
    H = fd_neg_hessian(logpost, x, fx)
    n_iter = int(res.nit)
    for _ in range(5):
        if np.linalg.norm(g) < GRAD_TOL:
            break
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            break
        x_new = x + np.linalg.solve(H, g)
        f_new = logpost(x_new)
        if not (np.isfinite(f_new) and f_new >= fx - 1e-12):
            break
        x, fx = x_new, f_new
        g = fd_gradient(logpost, x)
        H = fd_neg_hessian(logpost, x, fx)
        n_iter += 1
    converged = bool(np.linalg.norm(g) < GRAD_TOL)
    return ModeResult(x, H, g, float(fx), converged, n_iter)


def repair_pd(H: np.ndarray) -> tuple[np.ndarray, float]:
    """Add lambda*I, doubling lambda from 1e-8, until Cholesky succeeds."""
    H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)):
        raise ProposalError("negative Hessian has non-finite entries")
    lam = 0.0
    eye = np.eye(H.shape[0])
    while True:
        try:
            np.linalg.cholesky(H + lam * eye)
            if lam > 0:
                logger.info("neg-Hessian ridge repair: lambda=%g", lam)
            return H + lam * eye, lam
        except np.linalg.LinAlgError:
            lam = RIDGE_START if lam == 0.0 else 2.0 * lam
            if lam > RIDGE_MAX:
                raise ProposalError("negative Hessian could not be repaired")


@dataclass
class LaplaceProposal:
    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray
    log_det: float

    @classmethod
    def from_cov(cls, mean, cov) -> "LaplaceProposal":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        cov = 0.5 * (cov + cov.T)
        chol = np.linalg.cholesky(cov)
        return cls(mean, cov, chol, 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.chol @ rng.standard_normal(self.dim)

    def log_density(self, x) -> float:
        z = np.linalg.solve(self.chol, np.atleast_1d(x) - self.mean)
        return -0.5 * (self.dim * math.log(2.0 * math.pi) + self.log_det + float(z @ z))


def build_proposal(mode, neg_hessian, gradient_at_mode) -> LaplaceProposal:
    """Gaussian with covariance H^{-1} and mean mode + H^{-1} grad."""
    H, _ = repair_pd(np.atleast_2d(np.asarray(neg_hessian, dtype=float)))
    cov = np.linalg.inv(H)
    mean = np.atleast_1d(mode) + cov @ np.atleast_1d(gradient_at_mode)
    return LaplaceProposal.from_cov(mean, cov)


def mh_independence_step(current, logpost: Callable, proposal: LaplaceProposal,
                         rng: np.random.Generator, current_logpost: float | None = None):
    """One independence-sampler MH step.

    Returns ``(next, accepted, logpost_at_next)``.
    """
    current = np.atleast_1d(np.asarray(current, dtype=float))
    lp_cur = logpost(current) if current_logpost is None else current_logpost
    star = proposal.sample(rng)
    u = rng.random()
    lp_star = logpost(star)
    if not np.isfinite(lp_star):
        return current, False, lp_cur
    log_ratio = (lp_star - lp_cur + proposal.log_density(current) - proposal.log_density(star))
    if math.log(u) < log_ratio:
        return star, True, lp_star
    return current, False, lp_cur


def mh_random_walk_step(current, logpost: Callable, scale, rng: np.random.Generator,
                        current_logpost: float | None = None):
    """Symmetric Gaussian random-walk fallback used when no proposal can be built."""
    current = np.atleast_1d(np.asarray(current, dtype=float))
    lp_cur = logpost(current) if current_logpost is None else current_logpost
    star = current + np.asarray(scale) * rng.standard_normal(current.size)
    u = rng.random()
    lp_star = logpost(star)
    if np.isfinite(lp_star) and math.log(u) < lp_star - lp_cur:
        return star, True, lp_star
    return current, False, lp_cur
