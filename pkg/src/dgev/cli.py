"""``dgev`` command line: simulate, fit, summarize.

Failures exit nonzero with a single stderr line ``dgev: error: <Kind>: <message>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from dgev import dataio, diagnostics
from dgev.dataio import ConfigError, ParseError, RunManifest
from dgev.model import ModelParams, Seasonal
from dgev.special import GevParams

log = logging.getLogger("dgev")

EXIT_USAGE = 2
EXIT_RUNTIME = 1


def _parser():
    p = argparse.ArgumentParser(prog="dgev", description="Dependent GEV model with PGAS inference.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a synthetic dataset")
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--out", help=f"output directory (default ${dataio.OUT_DIR_ENV})")
    s.add_argument("--seed", type=int)
    s.add_argument("--T", type=int, dest="T")
    s.add_argument("--seasonal", action="store_true", default=None)
    s.add_argument("--freq", type=float)

    f = sub.add_parser("fit", help="run the Gibbs/PGAS sampler on a dataset")
    f.add_argument("--data", required=True, help="two-column CSV (time label, value)")
    f.add_argument("--config", help="key = value config file")
    f.add_argument("--out", help=f"output directory (default ${dataio.OUT_DIR_ENV})")
    f.add_argument("--seed", type=int)
    f.add_argument("--n-iter", type=int, dest="n_iter")
    f.add_argument("--burn-in", type=int, dest="burn_in")
    f.add_argument("--n-particles", type=int, dest="n_particles")
    f.add_argument("--thin-beta", type=int, dest="thin_beta")
    f.add_argument("--proposal", choices=("inverse_transform_t", "linearized"))
    f.add_argument("--seasonal", action="store_true", default=None)
    f.add_argument("--freq", type=float, help="seasonal frequency in cycles per time step")
    f.add_argument("--negate", action="store_true", default=None,
                   help="fit -y (minima as maxima); reported parameters refer to -y")
    f.add_argument("--standardize", dest="standardize", action="store_true", default=None)
    f.add_argument("--no-standardize", dest="standardize", action="store_false")

    m = sub.add_parser("summarize", help="recompute summaries from a fit output directory")
    m.add_argument("--draws", required=True, help="directory written by 'dgev fit'")
    m.add_argument("--out", help="where to write summaries (default: the draws directory)")
    m.add_argument("--batch", type=int, default=diagnostics.DEFAULT_BATCH)
    return p


def _overrides(args, keys):
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def cmd_simulate(args):
    from dgev.simulate import DEFAULT_SIM_SEED, SimSpec, study_params, simulate
    cfg = dataio.merge(dataio.load_config(args.config),
                       _overrides(args, ("seed", "T", "seasonal", "freq")))
    seasonal = bool(cfg.get("seasonal", False))
    base = study_params(seasonal)
    gev = GevParams(cfg.get("mu", base.gev.mu), cfg.get("psi", base.gev.psi), cfg.get("xi", base.gev.xi))
    seas = None
    if seasonal:
        freq = cfg.get("freq", base.seasonal.omega / (2.0 * math.pi))
        seas = Seasonal.from_freq(freq, cfg.get("a1", base.seasonal.a1), cfg.get("a2", base.seasonal.a2))
    sigma = cfg.get("sigma", math.sqrt(base.sigma2))
    params = ModelParams(gev, cfg.get("phi", base.phi), sigma * sigma, seas)
    spec = SimSpec(cfg.get("T", 1000), params, cfg.get("seed", DEFAULT_SIM_SEED), cfg.get("noise", True))
    out = dataio.resolve_out_dir(args.out)
    dataio.preflight(out)
    data, beta = simulate(spec)
    dataio.write_dataset(data, out / "data.csv")
    with open(out / "truth.csv", "w") as fh:
        fh.write("t,beta\n")
        for lab, b in zip(data.time_index, beta):
            fh.write(f"{lab},{dataio.fmt(b)}\n")
    meta = {"command": "simulate", "T": spec.T, "seed": spec.seed, "mu": gev.mu, "psi": gev.psi,
            "xi": gev.xi, "phi": params.phi, "sigma": sigma, "noise": spec.noise,
            "freq": None if seas is None else data.freq,
            "a1": None if seas is None else seas.a1, "a2": None if seas is None else seas.a2}
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return 0


def cmd_fit(args):
    from dgev.gibbs import run_chain
    cfg = dataio.merge(dataio.load_config(args.config), _overrides(
        args, ("seed", "n_iter", "burn_in", "n_particles", "thin_beta", "proposal",
               "seasonal", "freq", "negate", "standardize")))
    seasonal = bool(cfg.get("seasonal", False))
    manifest = RunManifest("fit", input=args.data, out_dir=args.out, config=args.config,
                           seed=cfg.get("seed"), model="seasonal" if seasonal else "dgev",
                           freq=cfg.get("freq"))
    out = dataio.resolve_out_dir(args.out)
    data = dataio.load_dataset(args.data)
    negate = bool(cfg.get("negate", False))
    if negate:
        data = type(data)(y=-data.y, time_index=data.time_index)
    if cfg.get("standardize", True):
        data = dataio.standardize(data)
    if seasonal:
        data.freq = cfg["freq"]
    chain_cfg = dataio.build_chain_config(cfg)
    dataio.preflight(out)

    t0 = time.perf_counter()
    draws = run_chain(data, chain_cfg)
    wall = time.perf_counter() - t0

    summary = diagnostics.summarize(draws)
    orig = None
    if data.standardization is not None:
        orig = diagnostics.summarize(
            draws, transform=lambda n, x: dataio.to_original_units(n, x, data.standardization))
    meta = {"input": Path(args.data).name, "negate": negate,
            "proposal": chain_cfg.proposal.kind, "freq": data.freq}
    dataio.write_outputs(draws, summary, manifest, out, data=data, meta=meta, orig_summary=orig)
    print((out / "report.txt").read_text(), end="")
    print(f"dgev: wall time {wall:.1f}s "
          + " ".join(f"{k}={v:.1f}s" for k, v in draws.timing.items() if k != "total"),
          file=sys.stderr)
    return 0


def cmd_summarize(args):
    src = Path(args.draws)
    if not (src / "draws.csv").is_file():
        raise ConfigError(f"{src}: no draws.csv found")
    names, _iters, mat = dataio.read_draws(src / "draws.csv")
    meta = {}
    if (src / "meta.json").is_file():
        meta = json.loads((src / "meta.json").read_text())
    out = Path(args.out) if args.out else src
    dataio.preflight(out)
    by_name = {n: mat[:, i] for i, n in enumerate(names)}
    rows = [diagnostics.summarize_draws(n, by_name[n], args.batch) for n in names]
    stdz = meta.get("standardization")
    orig_rows = None
    if stdz:
        orig_rows = [diagnostics.summarize_draws(n, dataio.to_original_units(n, by_name[n], stdz),
                                                 args.batch) for n in names]
    beta_sum, labels = None, None
    if (src / "beta_draws.npy").is_file():
        bd = np.load(src / "beta_draws.npy")
        if bd.size:
            beta_sum = diagnostics.summarize_beta(bd)
            labels = list(range(1, bd.shape[1] + 1))
            if (src / "beta_summary.csv").is_file():
                with open(src / "beta_summary.csv") as fh:
                    next(fh)
                    labels = [ln.split(",", 1)[0] for ln in fh if ln.strip()]
    dataio.write_summary_files(out, names, by_name, rows, beta_sum, labels, orig_rows=orig_rows)
    s = diagnostics.Summary(rows, beta_sum)
    so = None if orig_rows is None else diagnostics.Summary(orig_rows, None)
    dataio.write_report(out / "report.txt", {**meta, "batch": args.batch}, s, so)
    print((out / "report.txt").read_text(), end="")
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "summarize": cmd_summarize}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="dgev: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ConfigError) as exc:
        print(f"dgev: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, RuntimeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else ""
        print(f"dgev: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
