"""MCMC driver: theta-block MH, sigma2 Gibbs, phi MH, seasonal Gibbs, PGAS."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dgev import laplace
from dgev.model import (DatasetSpec, ModelParams, Priors, Seasonal, ThetaTarget, ar1_sums,
                        log_post_phi, seasonal_posterior_params, seasonal_term,
                        sigma2_posterior_params, time_grid)
from dgev.pgas import OBS_GEV, DegenerateWeightsError, ProposalConfig, csmc_sweep
from dgev.special import GevParams, inverse_obs

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20170402
MAX_PGAS_FAILURES = 10
RW_SCALE = 0.01
ACCEPT_BAND = (0.05, 0.99)
# burn-in only: a state this many proposal-sd from the Laplace mean is
# treated as an unconverged start and replaced by the proposed draw
RESCUE_DISTANCE = 6.0
INIT_CLIP = 4.0
BLOCKS = ("theta", "sigma2", "phi", "a", "beta")


class ChainError(RuntimeError):
    """Unrecoverable sampler failure; ``iteration`` is the 0-based sweep index."""

    def __init__(self, msg, iteration):
        self.iteration = iteration
        super().__init__(f"{msg} (iteration {iteration})")


class InitializationError(ValueError):
    pass


@dataclass
class ChainConfig:
    n_iter: int = 20000
    burn_in: int = 5000
    n_particles: int = 1000
    thin_beta: int = 10
    seed: int = DEFAULT_SEED
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    priors: Priors = field(default_factory=Priors)
    seasonal: bool = False
    freq: Optional[float] = None
    # test-harness hooks
    fixed: frozenset = frozenset()
    obs_kind: int = OBS_GEV
    backend: Optional[str] = None

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.thin_beta < 1:
            raise ValueError("thin_beta must be >= 1")
        if self.seasonal and not (self.freq and self.freq > 0):
            raise ValueError("seasonal model requires a positive freq")
        unknown = set(self.fixed) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown blocks in fixed: {sorted(unknown)}")


@dataclass
class ChainDraws:
    names: list
    draws: dict
    beta_draws: np.ndarray
    beta_iters: np.ndarray
    acceptance: dict
    n_iter: int
    burn_in: int
    n_particles: int
    seed: int
    run_log: list
    timing: dict

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.draws[n] for n in self.names])

    def acceptance_rate(self, block) -> float:
        acc, tot = self.acceptance[block]
        return acc / tot if tot else float("nan")


def param_names(seasonal: bool) -> list:
    return ["mu", "psi", "xi", "phi", "a1", "a2", "sigma"] if seasonal else \
        ["mu", "psi", "xi", "phi", "sigma"]


def initialize(data: DatasetSpec, config: ChainConfig, rng: Optional[np.random.Generator] = None):
    """Moment / inverse-transform starting values; ``rng`` is unused (deterministic)."""
    y = data.y
    q25, med, q75 = np.percentile(y, [25, 50, 75])
    iqr = q75 - q25
    if not iqr > 0:
        raise InitializationError("data have zero interquartile range")
    gev = GevParams(float(med), float(iqr / 2.0), 0.1)
    seasonal = Seasonal.from_freq(config.freq) if config.seasonal else None
    params = ModelParams(gev, 0.0, 1e-2 * float(np.var(y)), seasonal)
    return params, initial_latent(y, gev)


def initial_latent(y, gev: GevParams) -> np.ndarray:
    """Noise-free inverse of y, clipped to [-4, 4]; off-support entries start at 0."""
    beta = np.asarray(inverse_obs(np.atleast_1d(np.asarray(y, dtype=float)), gev), dtype=float)
    return np.where(np.isnan(beta), 0.0, np.clip(beta, -INIT_CLIP, INIT_CLIP))


def _log_sech2(z):
    a = abs(z)
    return -2.0 * (a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0))


class _Sampler:
    """Per-chain mutable state; one instance per run."""

    def __init__(self, data, config, params, beta, rng_mcmc, rng_pgas):
        self.data = data
        self.cfg = config
        self.params = params
        self.beta = beta
        self.rng = rng_mcmc
        self.rng_pgas = rng_pgas
        self.theta_mode = None
        self.phi_mode = None
        self.pgas_failures = 0
        self.in_burn_in = False
        self.rescues = 0

    def _independence(self, cur, h, prop):
        if self.in_burn_in:
            d = np.linalg.solve(prop.chol, cur - prop.mean)
            if float(d @ d) > RESCUE_DISTANCE ** 2:
                star = prop.sample(self.rng)
                self.rng.random()
                if np.isfinite(h(star)):
                    self.rescues += 1
                    return star, True, h(star)
        return laplace.mh_independence_step(cur, h, prop, self.rng)

    def theta_step(self):
        p = self.params
        target = ThetaTarget(self.data, self.beta, p, self.cfg.priors)

        def h(u):
            return target((u[0], math.exp(u[1]), u[2])) + u[1] if u[1] < 700 else -math.inf

        cur = np.array([p.gev.mu, math.log(p.gev.psi), p.gev.xi])
        start = self.theta_mode if self.theta_mode is not None else cur
        if not np.isfinite(h(start)):
            start = cur
        mode = laplace.find_mode(h, start)
        if not np.all(np.isfinite(mode.mode)):
            raise ChainError("theta optimiser returned a non-finite point", self.it)
        self.theta_mode = mode.mode
        fallback = False
        try:
            prop = laplace.build_proposal(mode.mode, mode.neg_hessian, mode.gradient)
        except (laplace.ProposalError, np.linalg.LinAlgError):
            fallback = True
        if fallback:
            logger.warning("iteration %d: theta proposal irreparable, random-walk fallback", self.it)
            new, acc, _ = laplace.mh_random_walk_step(cur, h, RW_SCALE, self.rng)
        else:
            new, acc, _ = self._independence(cur, h, prop)
        self.params = p.with_(gev=GevParams(float(new[0]), math.exp(new[1]), float(new[2])))
        return acc, fallback, mode.converged

    def sigma2_step(self):
        shape, rate = sigma2_posterior_params(self.data, self.beta, self.params, self.cfg.priors)
        self.params = self.params.with_(sigma2=rate / self.rng.gamma(shape))

    def phi_step(self):
        sums = ar1_sums(self.beta)

        def h(z):
            z = float(np.ravel(z)[0])
            return log_post_phi(math.tanh(z), sums=sums) + _log_sech2(z)

        cur = np.array([math.atanh(self.params.phi)])
        start = self.phi_mode if self.phi_mode is not None else cur
        mode = laplace.find_mode(h, start)
        self.phi_mode = mode.mode
        try:
            prop = laplace.build_proposal(mode.mode, mode.neg_hessian, mode.gradient)
        except (laplace.ProposalError, np.linalg.LinAlgError):
            logger.warning("iteration %d: phi proposal irreparable, random-walk fallback", self.it)
            new, acc, _ = laplace.mh_random_walk_step(cur, h, RW_SCALE, self.rng)
        else:
            new, acc, _ = self._independence(cur, h, prop)
        phi = math.tanh(float(new[0]))
        if not abs(phi) < 1.0:
            return False
        self.params = self.params.with_(phi=phi)
        return acc

    def seasonal_step(self):
        mean, cov = seasonal_posterior_params(self.data, self.beta, self.params, self.cfg.priors)
        a = mean + np.linalg.cholesky(cov) @ self.rng.standard_normal(2)
        s = self.params.seasonal
        self.params = self.params.with_(seasonal=Seasonal(float(a[0]), float(a[1]), s.omega))

    def beta_step(self):
        try:
            res = csmc_sweep(self.data, self.beta, self.params, self.cfg.n_particles,
                             self.cfg.proposal, self.rng_pgas, obs_kind=self.cfg.obs_kind,
                             backend=self.cfg.backend)
        except DegenerateWeightsError as exc:
            self.pgas_failures += 1
            logger.warning("iteration %d: %s", self.it, exc)
            if self.pgas_failures > MAX_PGAS_FAILURES:
                raise ChainError(f"PGAS failed {self.pgas_failures} consecutive sweeps", self.it)
            return None
        self.pgas_failures = 0
        self.beta = res.path
        return res


def make_chain_rngs(seed: int):
    """(mcmc, pgas) Philox streams derived from one seed."""
    a, b = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(a)), np.random.Generator(np.random.Philox(b))


def run_chain(data: DatasetSpec, config: ChainConfig, init=None) -> ChainDraws:
    """Run the full sampler; ``init=(params, beta)`` overrides :func:`initialize`."""
    rng_mcmc, rng_pgas = make_chain_rngs(config.seed)
    params, beta = initialize(data, config) if init is None else init
    beta = np.array(beta, dtype=float)
    if config.seasonal and params.seasonal is None:
        params = params.with_(seasonal=Seasonal.from_freq(config.freq))
    s = _Sampler(data, config, params, beta, rng_mcmc, rng_pgas)
    fixed = config.fixed
    seasonal = params.seasonal is not None and config.seasonal
    names = param_names(seasonal)
    n_keep = config.n_iter - config.burn_in
    out = {n: np.empty(n_keep) for n in names}
    beta_iters = np.arange(config.burn_in, config.n_iter, config.thin_beta)
    beta_draws = np.empty((beta_iters.size, data.T))
    acc = {"theta": [0, 0], "phi": [0, 0]}
    timing = {b: 0.0 for b in BLOCKS}
    run_log = []
    t_start = time.perf_counter()
    report_every = max(1, config.n_iter // 10)
    for it in range(config.n_iter):
        s.it = it
        s.in_burn_in = it < config.burn_in
        if it == config.burn_in and s.rescues:
            logger.info("burn-in rescue moves: %d", s.rescues)
        row = {"iter": it, "theta_acc": "", "theta_rw": "", "phi_acc": "",
               "ess_min": "", "ess_final": "", "c_events": "", "pgas_fail": 0}
        t0 = time.perf_counter()
        if "theta" not in fixed:
            a, fb, _conv = s.theta_step()
            acc["theta"][0] += int(a)
            acc["theta"][1] += 1
            row["theta_acc"], row["theta_rw"] = int(a), int(fb)
        t1 = time.perf_counter()
        if "sigma2" not in fixed:
            s.sigma2_step()
        t2 = time.perf_counter()
        if "phi" not in fixed:
            a = s.phi_step()
            acc["phi"][0] += int(a)
            acc["phi"][1] += 1
            row["phi_acc"] = int(a)
        t3 = time.perf_counter()
        if seasonal and "a" not in fixed:
            s.seasonal_step()
        t4 = time.perf_counter()
        if "beta" not in fixed:
            res = s.beta_step()
            if res is None:
                row["pgas_fail"] = 1
            else:
                row["ess_min"] = float(res.ess.min())
                row["ess_final"] = float(res.ess[-1])
                row["c_events"] = res.c_events
        t5 = time.perf_counter()
        for b, dt in zip(BLOCKS, (t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4)):
            timing[b] += dt
        run_log.append(row)
        if it >= config.burn_in:
            k = it - config.burn_in
            p = s.params
            vals = {"mu": p.gev.mu, "psi": p.gev.psi, "xi": p.gev.xi, "phi": p.phi,
                    "sigma": math.sqrt(p.sigma2)}
            if seasonal:
                vals["a1"], vals["a2"] = p.seasonal.a1, p.seasonal.a2
            for n in names:
                out[n][k] = vals[n]
            if k % config.thin_beta == 0:
                beta_draws[k // config.thin_beta] = s.beta
        if (it + 1) % report_every == 0:
            logger.info("iteration %d/%d (%.1fs)", it + 1, config.n_iter,
                        time.perf_counter() - t_start)
    timing["total"] = time.perf_counter() - t_start
    for blk in ("theta", "phi"):
        a, n = acc[blk]
        if n and not ACCEPT_BAND[0] < a / n < ACCEPT_BAND[1]:
            logger.warning("%s acceptance rate %.3f outside sanity band %s", blk, a / n, ACCEPT_BAND)
    return ChainDraws(names, out, beta_draws, beta_iters, {k: tuple(v) for k, v in acc.items()},
                      config.n_iter, config.burn_in, config.n_particles, config.seed,
                      run_log, timing)
