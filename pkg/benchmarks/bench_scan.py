"""Throughput comparison of the pair-scan backends.

Times one full collision scan (proposal + thinning over all interacting
pairs) with the compiled Cython core against the pure-numpy fallback, at a
range of particle counts spanning the dense/binned switchover.  Both
backends draw from the same counter-based stream, so before timing each
size the script checks that they accept identical events.

Usage:
    python3 benchmarks/bench_scan.py [--sizes 256,1024,4096,16384]
                                     [--repeats 5] [--threads 1]
"""

import argparse
import os
import time

import numpy as np

from enskog import backend
from enskog.backend import scan_step
from enskog.process import SimConfig, initial_ensemble


def _setup(n, seed=7):
    cfg = SimConfig(
        n_particles=n, t_end=0.1, dt=0.01, seed=seed,
        nu=0.5, b_coeff=1.0, theta_min=0.01, gamma=1.0, c_sigma=1.0,
        r_beta=0.5, amplitude=1.0, init="gaussian", r_scale=0.4, v_scale=1.0,
    )
    ens = initial_ensemble(cfg)
    return ens.positions, ens.velocities, cfg.kernel()


def _time_scan(R, V, kern, repeats, threads):
    args = dict(dt=0.01, seed=99, step_index=3, scheme="symmetric-pair", t0=0.0)
    best = float("inf")
    batch = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        batch = scan_step(R, V, kern, threads=threads, **args)
        best = min(best, time.perf_counter() - t0)
    return best, batch


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,1024,4096,16384",
                    help="comma-separated particle counts")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats per cell (best-of)")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads for the compiled core")
    opts = ap.parse_args(argv)
    sizes = [int(s) for s in opts.sizes.split(",")]

    if backend._scan_core is None:
        print("compiled core not importable; timing the numpy fallback only")

    print(f"{'n':>7} {'pairs':>12} {'events':>8} "
          f"{'cython (ms)':>12} {'numpy (ms)':>11} {'speedup':>8}")
    for n in sizes:
        R, V, kern = _setup(n)
        rows = {}
        for name in ("cython", "numpy"):
            if name == "cython" and backend._scan_core is None:
                continue
            os.environ["ENSKOG_BACKEND"] = "" if name == "cython" else "numpy"
            rows[name] = _time_scan(R, V, kern, opts.repeats, opts.threads)
        os.environ.pop("ENSKOG_BACKEND", None)

        if "cython" in rows:
            b_c, b_n = rows["cython"][1], rows["numpy"][1]
            same = (len(b_c) == len(b_n)
                    and np.array_equal(b_c.i, b_n.i)
                    and np.array_equal(b_c.j, b_n.j)
                    and np.array_equal(b_c.time, b_n.time))
            if not same:
                raise SystemExit(f"backend mismatch at n={n}")
        t_core = rows["cython"][0] * 1e3 if "cython" in rows else float("nan")
        t_np = rows["numpy"][0] * 1e3
        ratio = t_np / t_core if "cython" in rows else float("nan")
        print(f"{n:>7} {n * (n - 1) // 2:>12} {len(rows['numpy'][1]):>8} "
              f"{t_core:>12.2f} {t_np:>11.2f} {ratio:>7.1f}x")


if __name__ == "__main__":
    main()
