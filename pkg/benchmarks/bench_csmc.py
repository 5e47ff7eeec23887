"""Time one conditional SMC sweep under the compiled and numpy kernels.

    python3 benchmarks/bench_csmc.py [--sizes 500x200 1000x1000] [--repeat 5]

Both kernels consume the same pre-drawn random numbers, so the script also
reports the largest difference between the returned paths.
"""
import argparse
import time

import numpy as np

from dgev import pgas
from dgev.simulate import SimSpec, study_params, simulate


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(T, N, repeat, proposal):
    params = study_params()
    data, beta = simulate(SimSpec(T, params))
    cfg = pgas.ProposalConfig(kind=proposal)
    row = {}
    paths = {}
    for backend in ("cython", "python"):
        def sweep():
            rng = np.random.Generator(np.random.Philox(7))
            return pgas.csmc_sweep(data, beta, params, N, cfg, rng, backend=backend)
        try:
            dt, res = _time(sweep, repeat if backend == "cython" else max(1, repeat // 2))
        except ImportError:
            dt, res = float("nan"), None
        row[backend] = dt
        paths[backend] = None if res is None else res.path
    diff = (float(np.max(np.abs(paths["cython"] - paths["python"])))
            if paths["cython"] is not None else float("nan"))
    return row, diff


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", nargs="+", default=["200x100", "500x200", "1000x1000"])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--proposal", default=pgas.INVERSE_T, choices=(pgas.INVERSE_T, pgas.LINEARIZED))
    args = ap.parse_args()
    print(f"{'T':>6} {'N':>6} {'cython ms':>10} {'python ms':>10} {'ns/step cy':>11} "
          f"{'ns/step py':>11} {'speedup':>8} {'max |dpath|':>12}")
    for size in args.sizes:
        T, N = (int(v) for v in size.lower().split("x"))
        row, diff = bench(T, N, args.repeat, args.proposal)
        cy, py = row["cython"], row["python"]
        print(f"{T:>6} {N:>6} {1e3 * cy:>10.2f} {1e3 * py:>10.2f} {1e9 * cy / (T * N):>11.1f} "
              f"{1e9 * py / (T * N):>11.1f} {py / cy:>8.1f} {diff:>12.2e}")


if __name__ == "__main__":
    main()
