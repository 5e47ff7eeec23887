"""Dependent GEV model: Gaussian-copula AR(1) latent process with PGAS inference."""
from dgev._backend import BACKEND
from dgev.diagnostics import summarize
from dgev.gibbs import ChainConfig, ChainDraws, run_chain
from dgev.model import DatasetSpec, ModelParams, Priors, Seasonal
from dgev.pgas import ProposalConfig, csmc_sweep
from dgev.simulate import SimSpec, simulate
from dgev.special import GevParams, gev_cdf, inverse_obs, obs_mean

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChainConfig", "ChainDraws", "DatasetSpec", "GevParams", "ModelParams",
    "Priors", "ProposalConfig", "Seasonal", "SimSpec", "csmc_sweep", "gev_cdf",
    "inverse_obs", "obs_mean", "run_chain", "simulate", "summarize",
]
