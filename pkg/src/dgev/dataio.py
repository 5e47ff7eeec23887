"""Dataset ingestion, key = value configs, and run output files.

Every numeric table is written at 17 significant digits so a rerun with
the same manifest reproduces the files byte for byte.  Wall-clock timing
is deliberately kept out of the files.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from dgev import diagnostics
from dgev.model import DatasetSpec, Priors
from dgev.pgas import ProposalConfig

FMT = "%.17g"
ACF_LAGS = 100
OUT_DIR_ENV = "DGEV_OUT_DIR"


class ParseError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return FMT % float(v)


# ---------------------------------------------------------------- datasets

def load_dataset(path) -> DatasetSpec:
    """Two-column (time label, value) comma-separated file with one header line."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    labels, values = [], []
    header = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            cells = [c.strip() for c in row]
            if header is None:
                if len(cells) != 2:
                    raise ParseError(f"line {lineno}: header must have 2 columns")
                header = cells
                continue
            if cells == header:
                raise ParseError(f"line {lineno}: duplicate header")
            if len(cells) != 2:
                raise ParseError(f"line {lineno}: expected 2 columns, got {len(cells)}")
            try:
                v = float(cells[1])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric value {cells[1]!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"line {lineno}: non-finite value {cells[1]!r}")
            labels.append(cells[0])
            values.append(v)
    if header is None or len(values) < 2:
        raise ParseError("T ≥ 2 required")
    return DatasetSpec(y=np.array(values), time_index=labels)


def write_dataset(data: DatasetSpec, path, value_name="y") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"t,{value_name}\n")
        for lab, v in zip(data.time_index, data.y):
            fh.write(f"{lab},{fmt(v)}\n")


def standardize(data: DatasetSpec) -> DatasetSpec:
    mean = float(np.mean(data.y))
    sd = float(np.std(data.y, ddof=1))
    if not sd > 0:
        raise ValueError("cannot standardize data with zero standard deviation")
    return DatasetSpec(y=(data.y - mean) / sd, time_index=list(data.time_index),
                       freq=data.freq, standardization=(mean, sd))


def destandardize_values(values, standardization):
    mean, sd = standardization
    return mean + sd * np.asarray(values, dtype=float)


def to_original_units(name, x, standardization):
    """Map draws of ``name`` from standardized to data units; xi and phi are unit-free."""
    if standardization is None:
        return x
    mean, sd = standardization
    if name == "mu":
        return mean + sd * x
    if name in ("psi", "sigma", "a1", "a2"):
        return sd * x
    return x


# ---------------------------------------------------------------- config

_CHAIN_KEYS = {"n_iter": int, "burn_in": int, "n_particles": int, "thin_beta": int, "seed": int}
_PROPOSAL_KEYS = {"proposal": str, "c": float, "t_df": int, "t_scale_floor": float}
_PRIOR_KEYS = {f.name: float for f in fields(Priors)}
_MODEL_KEYS = {"seasonal": "bool", "freq": float, "standardize": "bool", "negate": "bool"}
_SIM_KEYS = {"T": int, "mu": float, "psi": float, "xi": float, "phi": float, "sigma": float,
             "a1": float, "a2": float, "noise": "bool"}
KNOWN_KEYS = {**_CHAIN_KEYS, **_PROPOSAL_KEYS, **_PRIOR_KEYS, **_MODEL_KEYS, **_SIM_KEYS}


def _coerce(key, raw):
    kind = KNOWN_KEYS[key]
    if kind == "bool":
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: no such config file")
    return parse_config_text(p.read_text())


def merge(config: dict, overrides: dict) -> dict:
    out = dict(config)
    out.update({k: _coerce(k, v) if isinstance(v, str) else v
                for k, v in overrides.items() if v is not None})
    return out


def build_chain_config(cfg: dict, **extra):
    from dgev.gibbs import ChainConfig
    prop = ProposalConfig(
        kind=cfg.get("proposal", ProposalConfig.kind),
        c=cfg.get("c", ProposalConfig.c),
        t_df=cfg.get("t_df", ProposalConfig.t_df),
        t_scale_floor=cfg.get("t_scale_floor", ProposalConfig.t_scale_floor),
    )
    priors = Priors(**{k: cfg[k] for k in _PRIOR_KEYS if k in cfg})
    kw = {k: cfg[k] for k in _CHAIN_KEYS if k in cfg}
    if cfg.get("seasonal"):
        kw["seasonal"] = True
        kw["freq"] = cfg.get("freq")
    return ChainConfig(proposal=prop, priors=priors, **kw, **extra)


# ---------------------------------------------------------------- outputs

@dataclass
class RunManifest:
    command: str
    input: Optional[str] = None
    out_dir: Optional[str] = None
    config: Optional[str] = None
    seed: Optional[int] = None
    model: str = "dgev"
    freq: Optional[float] = None

    def __post_init__(self):
        if self.command not in ("simulate", "fit", "summarize"):
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command == "fit" and not self.input:
            raise ConfigError("fit requires an input dataset")
        if self.model not in ("dgev", "seasonal"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.model == "seasonal" and not (self.freq and self.freq > 0):
            raise ConfigError("seasonal model requires --freq")


def resolve_out_dir(out: Optional[str]) -> Path:
    out = out or os.environ.get(OUT_DIR_ENV)
    if not out:
        raise ConfigError(f"no output directory (use --out or set {OUT_DIR_ENV})")
    return Path(out)


def preflight(out_dir: Path) -> None:
    """Fail before any sampling if ``out_dir`` cannot be written."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".dgev_write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc.strerror}") from None


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(c if isinstance(c, str) else fmt(c) for c in r) + "\n")


def write_draws(path, names, matrix, first_iter):
    rows = ([first_iter + i, *row] for i, row in enumerate(matrix))
    _write_rows(path, ["iter", *names], rows)


def read_draws(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    mat = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header[1:], mat[:, 0].astype(int), mat[:, 1:]


def write_summary_files(out_dir: Path, names, draws_by_name, summary_rows, beta_summary,
                        time_labels, unit_label="model", orig_rows=None):
    rows = [(unit_label, r.name, r.median, r.ci_low, r.ci_high, r.inefficiency)
            for r in summary_rows]
    if orig_rows is not None:
        rows += [("original", r.name, r.median, r.ci_low, r.ci_high, r.inefficiency)
                 for r in orig_rows]
    _write_rows(out_dir / "summary.csv",
                ["units", "name", "median", "ci_low", "ci_high", "inefficiency"],
                [(u, n, *v) for u, n, *v in rows])

    n = len(next(iter(draws_by_name.values())))
    lags = min(ACF_LAGS, n - 1)
    cols = []
    for name in names:
        try:
            cols.append(diagnostics.acf(draws_by_name[name], lags))
        except ValueError:
            cols.append(np.full(lags + 1, np.nan))
    _write_rows(out_dir / "acf.csv", ["lag", *names],
                ([s, *(c[s] for c in cols)] for s in range(lags + 1)))

    hist_rows = []
    for name in names:
        edges, counts, kde = diagnostics.histogram_table(draws_by_name[name])
        for i in range(counts.size):
            hist_rows.append((name, edges[i], edges[i + 1], int(counts[i]), kde[i]))
    _write_rows(out_dir / "hist.csv", ["name", "bin_low", "bin_high", "count", "kde"], hist_rows)

    if beta_summary is not None:
        b = beta_summary
        _write_rows(out_dir / "beta_summary.csv", ["t", "median", "q025", "q975", "flag"],
                    ((str(lab), b.median[i], b.q025[i], b.q975[i],
                      "extreme" if b.extreme[i] else "normal")
                     for i, lab in enumerate(time_labels)))


def write_outputs(draws, summary, manifest: RunManifest, out_dir: Path, *, data: DatasetSpec,
                  meta: dict, orig_summary=None):
    """Write draws, latent summary, summary report, ACF, histogram and run-log files."""
    out_dir = Path(out_dir)
    write_draws(out_dir / "draws.csv", draws.names, draws.as_matrix(), draws.burn_in)
    np.save(out_dir / "beta_draws.npy", np.asarray(draws.beta_draws))
    write_summary_files(out_dir, draws.names, draws.draws, summary.rows, summary.beta,
                        data.time_index, orig_rows=None if orig_summary is None else orig_summary.rows)
    log_cols = ["iter", "theta_acc", "theta_rw", "phi_acc", "ess_min", "ess_final",
                "c_events", "pgas_fail"]
    _write_rows(out_dir / "run_log.csv", log_cols,
                ([r[c] if r[c] != "" else "" for c in log_cols] for r in draws.run_log))
    meta = dict(meta)
    meta.update({
        "command": manifest.command, "model": manifest.model, "seed": draws.seed,
        "n_iter": draws.n_iter, "burn_in": draws.burn_in, "n_particles": draws.n_particles,
        "thin_beta": int(draws.beta_iters[1] - draws.beta_iters[0]) if draws.beta_iters.size > 1 else 1,
        "accept_theta": draws.acceptance_rate("theta"), "accept_phi": draws.acceptance_rate("phi"),
        "T": data.T,
        "standardization": None if data.standardization is None else list(data.standardization),
        "names": list(draws.names),
    })
    (out_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    write_report(out_dir / "report.txt", meta, summary, orig_summary)


def write_report(path, meta, summary, orig_summary=None):
    lines = ["# dGEV posterior summary"]
    for k in sorted(meta):
        v = meta[k]
        if isinstance(v, float):
            v = fmt(v)
        lines.append(f"{k} = {v}")
    for label, s in (("model units", summary), ("original units", orig_summary)):
        if s is None:
            continue
        lines.append("")
        lines.append(f"[{label}]")
        lines.append(f"{'name':<8}" + "".join(f" {h:>24}" for h in ("median", "ci_low", "ci_high",
                                                                    "inefficiency")))
        for r in s.rows:
            lines.append(f"{r.name:<8}" + "".join(f" {fmt(v):>24}" for v in
                                                  (r.median, r.ci_low, r.ci_high, r.inefficiency)))
    Path(path).write_text("\n".join(lines) + "\n")
