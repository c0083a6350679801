"""Compare the compiled and pure-Python stiffness kernels.

Usage: python3 benchmarks/bench_kernels.py [--size 120] [--repeat 3]
"""

import argparse
import time

import numpy as np

from adleg import kernels
from adleg.legendre import log_adams_table
from adleg.problems import build_problem


def bench(backend, rows, cols, nu, sigma, la, repeat):
    mod = kernels.get_backend(backend)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        d = mod.diffusion_entries(rows, cols, nu, la)
        r = mod.reaction_entries(rows, cols, sigma, la)
        best = min(best, time.perf_counter() - t0)
    return best, d + r


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=120, help="leading block size")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    p = build_problem("P3")
    nu = p.nu.coeffs
    sigma = np.array([1.0, 0.5, 0.25])  # nonzero reaction so both kernels run
    idx = np.arange(2, args.size + 2)
    R, C = np.meshgrid(idx, idx, indexing="ij")
    rows, cols = R.ravel(), C.ravel()
    la = log_adams_table(2 * args.size + 4)

    results = {}
    for name in kernels.available_backends():
        secs, vals = bench(name, rows, cols, nu, sigma, la, args.repeat)
        results[name] = vals
        print(f"{name:>7}: {rows.size} entries in {secs * 1e3:9.2f} ms "
              f"({rows.size / secs:,.0f} entries/s)")
    if len(results) == 2:
        diff = np.abs(results["cython"] - results["python"]).max()
        print(f"max |cython - python| = {diff:.2e}")


if __name__ == "__main__":
    main()
