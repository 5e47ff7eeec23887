"""Synthetic dGEV / seasonal dGEV data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dgev.model import DatasetSpec, ModelParams, Seasonal, mean_at, time_grid
from dgev.special import GevParams

DEFAULT_SIM_SEED = 20170401

# Settings of the reference simulation study.
STUDY_GEV = GevParams(mu=0.5, psi=0.3, xi=0.05)
STUDY_PHI = 0.8
STUDY_SIGMA = 0.1
STUDY_SEASONAL = Seasonal(a1=1.0, a2=2.0, omega=2.0 * math.pi / 365.25)


def study_params(seasonal: bool = False) -> ModelParams:
    return ModelParams(STUDY_GEV, STUDY_PHI, STUDY_SIGMA ** 2,
                       STUDY_SEASONAL if seasonal else None)


@dataclass(frozen=True)
class SimSpec:
    T: int
    params: ModelParams
    seed: int = DEFAULT_SIM_SEED
    noise: bool = True

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")


def make_rngs(seed: int):
    """Independent (latent, observation) Philox streams derived from one seed."""
    latent, obs = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(latent)), np.random.Generator(np.random.Philox(obs))


def simulate_latent(spec: SimSpec, rng: np.random.Generator, size=None) -> np.ndarray:
    """Stationary AR(1) path with N(0, 1) marginals; ``size`` adds leading replicate axes."""
    shape = (spec.T,) if size is None else (size, spec.T)
    eps = rng.standard_normal(shape)
    phi = spec.params.phi
    sd = math.sqrt(1.0 - phi * phi)
    beta = np.empty(shape)
    beta[..., 0] = eps[..., 0]
    for t in range(1, spec.T):
        beta[..., t] = phi * beta[..., t - 1] + sd * eps[..., t]
    return beta


def simulate_observations(beta, spec: SimSpec, rng: np.random.Generator) -> DatasetSpec:
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != spec.T:
        raise ValueError("beta length must equal spec.T")
    p = spec.params
    y = mean_at(time_grid(spec.T), beta, p)
    if spec.noise:
        y = y + math.sqrt(p.sigma2) * rng.standard_normal(beta.shape)
    freq = None if p.seasonal is None else p.seasonal.omega / (2.0 * math.pi)
    return DatasetSpec(y=y, time_index=list(range(1, spec.T + 1)), freq=freq)


def simulate(spec: SimSpec):
    """(dataset, true beta) for ``spec`` with its own seed."""
    r_lat, r_obs = make_rngs(spec.seed)
    beta = simulate_latent(spec, r_lat)
    return simulate_observations(beta, spec, r_obs), beta
