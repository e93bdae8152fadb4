"""Backend dispatch for the pair scan.

The compiled core (Cython) is used when importable; the numpy fallback is
decision-identical (same counter-based stream) and selected automatically or
via the ENSKOG_BACKEND=numpy environment variable.  Both return the same
canonically ordered event batch, so trajectories do not depend on worker
count or on the binned/dense choice.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _scan_numpy

try:
    from . import _scan_core
except ImportError:  # pragma: no cover - exercised only without the extension
    _scan_core = None

__all__ = ["EventBatch", "active_backend", "scan_step", "BINNED_THRESHOLD"]

# Above this particle count the neighbor-binned scan is used automatically.
BINNED_THRESHOLD = 2048


def _want_numpy():
    return os.environ.get("ENSKOG_BACKEND", "").lower() == "numpy"


def active_backend():
    """Name of the scan implementation in use: 'cython' or 'numpy'."""
    return "numpy" if (_scan_core is None or _want_numpy()) else "cython"


@dataclass
class EventBatch:
    """Accepted collision proposals for one step, sorted by (time, i, j)."""

    time: np.ndarray
    i: np.ndarray
    j: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    z: np.ndarray
    max_rate_dt: float

    def __len__(self):
        return self.time.size


def _params(kern, n_particles, dt, seed, step_index, t0):
    ang = kern.angular
    return {
        "t0": float(t0),
        "dt": float(dt),
        "r_beta2": kern.mollifier.r_beta**2,
        "amplitude": kern.mollifier.amplitude,
        "half_gamma": 0.5 * kern.cross_section.gamma,
        "c_sigma": kern.cross_section.c_sigma,
        "rate_pref": kern.rate_prefactor / n_particles,
        "a_pow": ang.theta_min**-ang.nu,
        "span": ang.nu * ang.total_mass / ang.b_coeff,
        "inv_nu": 1.0 / ang.nu,
        "theta_min": ang.theta_min,
        "seed": int(seed),
        "step": int(step_index),
    }


def _core_chunk(R, V, par, one_sided, row_lo, row_hi, cells):
    """Run one row chunk through the compiled core, growing buffers on demand."""
    cap = max(4096, (row_hi - row_lo) // 4)
    args = (
        np.uint64(par["seed"]), np.uint64(par["step"]), par["t0"], par["dt"],
        one_sided, par["r_beta2"], par["amplitude"], par["half_gamma"],
        par["c_sigma"], par["rate_pref"], par["a_pow"], par["span"],
        par["inv_nu"], par["theta_min"],
    )
    while True:
        out = (
            np.empty(cap), np.empty(cap, np.int64), np.empty(cap, np.int64),
            np.empty(cap), np.empty(cap), np.empty(cap),
        )
        if cells is None:
            n, mx = _scan_core.scan_dense(R, V, *args, row_lo, row_hi, *out)
        else:
            dims = cells["dims"]
            n, mx = _scan_core.scan_binned(
                R, V, *args, cells["flat"], cells["members"], cells["start"],
                int(dims[0]), int(dims[1]), int(dims[2]), row_lo, row_hi, *out,
            )
        if n <= cap:
            return tuple(a[:n].copy() for a in out), mx
        cap = int(n) + 64


def scan_step(R, V, kern, dt, seed, step_index, scheme, t0, threads=1, binned=None):
    """Scan all pairs for collision proposals in [t0, t0+dt).

    Returns an EventBatch sorted by (time, i, j).  `scheme` is
    'symmetric-pair' (unordered pairs) or 'one-sided' (ordered pairs).
    The result is independent of `threads` and of the binned/dense choice.
    """
    R = np.ascontiguousarray(R, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    n = R.shape[0]
    one_sided = scheme == "one-sided"
    par = _params(kern, n, dt, seed, step_index, t0)
    if binned is None:
        binned = n > BINNED_THRESHOLD
    cells = _scan_numpy.build_cells(R, kern.mollifier.r_beta) if binned else None

    use_core = _scan_core is not None and not _want_numpy()
    if use_core:
        bounds = np.linspace(0, n, max(1, int(threads)) + 1).astype(int)
        chunk_args = [
            (R, V, par, one_sided, int(lo), int(hi), cells)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        if len(chunk_args) > 1:
            with ThreadPoolExecutor(max_workers=len(chunk_args)) as pool:
                results = list(pool.map(lambda a: _core_chunk(*a), chunk_args))
        else:
            results = [_core_chunk(*a) for a in chunk_args]
        chunks = [r[0] for r in results if r[0][0].size]
        max_rate = max((r[1] for r in results), default=0.0)
        ev = _scan_numpy._concat(chunks)
    else:
        if cells is None:
            ev, max_rate = _scan_numpy.scan_dense(R, V, par, one_sided, 0, n)
        else:
            ev, max_rate = _scan_numpy.scan_binned(R, V, par, one_sided, 0, n, cells)

    order = np.lexsort((ev[2], ev[1], ev[0]))
    ev = tuple(a[order] for a in ev)
    return EventBatch(*ev, max_rate_dt=float(max_rate))
