"""Posterior summaries, autocorrelation and inefficiency factors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dgev.special import std_normal_inv_cdf

DEFAULT_BATCH = 500
HIST_BINS = 50

# Standard-normal reference lines for the latent path (0.005, 0.025, 0.975, 0.995).
REFERENCE_PROBS = (0.005, 0.025, 0.975, 0.995)
REFERENCE_LINES = {p: std_normal_inv_cdf(p) for p in REFERENCE_PROBS}
EXTREME_LINE = REFERENCE_LINES[0.995]


@dataclass(frozen=True)
class SummaryRow:
    name: str
    median: float
    ci_low: float
    ci_high: float
    inefficiency: float


@dataclass
class BetaSummary:
    median: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    extreme: np.ndarray
    reference_lines: dict


@dataclass
class Summary:
    rows: list
    beta: BetaSummary | None

    def row(self, name) -> SummaryRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def acf(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelations rho_0..rho_max_lag (biased, common-mean estimator)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if not 1 <= max_lag < n:
        raise ValueError("need 1 <= max_lag < len(x)")
    d = x - x.mean()
    denom = float(d @ d)
    if not denom > 0:
        raise ValueError("autocorrelation undefined for a constant series")
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    r = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    out = r / denom
    out[0] = 1.0
    return out


def inefficiency_factor(x, batch: int = DEFAULT_BATCH) -> float:
    """1 + 2 sum_{s=1}^{M} (1 - s/M) rho_s with truncation lag M = ``batch``."""
    x = np.asarray(x, dtype=float)
    if not x.size > batch:
        raise ValueError("series must be longer than the batch size")
    rho = acf(x, batch)
    s = np.arange(1, batch + 1)
    return float(1.0 + 2.0 * np.sum((1.0 - s / batch) * rho[1:]))


def quantiles(x, probs=(0.025, 0.5, 0.975)) -> np.ndarray:
    """Type-7 (linear interpolation) sample quantiles."""
    return np.quantile(np.asarray(x, dtype=float), probs, method="linear")


def summarize_draws(name, x, batch: int = DEFAULT_BATCH) -> SummaryRow:
    lo, med, hi = quantiles(x)
    x = np.asarray(x, dtype=float)
    m = min(batch, x.size - 1)
    try:
        ineff = inefficiency_factor(x, m) if m >= 1 else math.nan
    except ValueError:
        ineff = math.nan
    return SummaryRow(name, float(med), float(lo), float(hi), ineff)


def summarize_beta(beta_draws) -> BetaSummary:
    b = np.asarray(beta_draws, dtype=float)
    q025, med, q975 = np.quantile(b, (0.025, 0.5, 0.975), axis=0, method="linear")
    extreme = ((np.abs(med) > EXTREME_LINE) | (q975 > EXTREME_LINE) | (q025 < -EXTREME_LINE))
    return BetaSummary(med, q025, q975, extreme, dict(REFERENCE_LINES))


def summarize(draws, batch: int = DEFAULT_BATCH, transform=None) -> Summary:
    """Summary rows for every parameter plus the latent-path summary.

    ``transform`` maps (name, draws) -> draws, e.g. to report original units.
    """
    rows = []
    for name in draws.names:
        x = draws.draws[name]
        if transform is not None:
            x = transform(name, x)
        rows.append(summarize_draws(name, x, batch))
    beta = summarize_beta(draws.beta_draws) if len(draws.beta_draws) else None
    return Summary(rows, beta)


def histogram_table(x, bins: int = HIST_BINS):
    """(edges, counts, kde_at_centres); Gaussian KDE with bandwidth 1.06 sd n^(-1/5)."""
    x = np.asarray(x, dtype=float)
    counts, edges = np.histogram(x, bins=bins)
    centres = 0.5 * (edges[:-1] + edges[1:])
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if sd > 0:
        h = 1.06 * sd * x.size ** (-0.2)
        z = (centres[:, None] - x[None, :]) / h
        kde = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))
    else:
        kde = np.full(centres.shape, np.nan)
    return edges, counts, kde
