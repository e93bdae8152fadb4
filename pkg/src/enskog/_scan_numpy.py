"""Pure-numpy collision-proposal scan (fallback for the compiled core).

Same per-pair stream, acceptance rule, and sampled angles as
enskog._scan_core; selected at import time by enskog.backend.
"""

import math

import numpy as np

from .rng import SLOT_FIRE, SLOT_PHI, SLOT_THETA, SLOT_TIME, SLOT_Z, pair_uniform_array

_NEIGHBOR_OFFSETS = np.array(
    [[dx, dy, dz] for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)


def _pair_body(R, V, ii, jj, par):
    """Evaluate the proposal body on candidate pairs; returns event arrays."""
    empty = (
        np.empty(0),
        np.empty(0, np.int64),
        np.empty(0, np.int64),
        np.empty(0),
        np.empty(0),
        np.empty(0),
    )
    if ii.size == 0:
        return empty, 0.0
    dr = R[ii] - R[jj]
    d2 = np.einsum("ij,ij->i", dr, dr)
    near = d2 < par["r_beta2"]
    if not near.any():
        return empty, 0.0
    ii, jj, d2 = ii[near], jj[near], d2[near]
    s2 = d2 / par["r_beta2"]
    beta = par["amplitude"] * np.exp(1.0 - 1.0 / (1.0 - s2))
    dv = V[ii] - V[jj]
    g2 = np.einsum("ij,ij->i", dv, dv)
    sig = par["c_sigma"] * np.power(1.0 + g2, par["half_gamma"])
    lam_dt = par["rate_pref"] * beta * sig * par["dt"]
    max_rate_dt = float(lam_dt.max())
    u = pair_uniform_array(par["seed"], par["step"], ii, jj, SLOT_FIRE)
    fire = u < -np.expm1(-lam_dt)
    if not fire.any():
        return empty, max_rate_dt
    ii, jj = ii[fire], jj[fire]
    u_th = pair_uniform_array(par["seed"], par["step"], ii, jj, SLOT_THETA)
    theta = np.power(par["a_pow"] - u_th * par["span"], -par["inv_nu"])
    theta = np.clip(theta, par["theta_min"], math.pi)
    phi = 2.0 * math.pi * pair_uniform_array(par["seed"], par["step"], ii, jj, SLOT_PHI)
    z = pair_uniform_array(par["seed"], par["step"], ii, jj, SLOT_Z)
    toff = pair_uniform_array(par["seed"], par["step"], ii, jj, SLOT_TIME)
    time = par["t0"] + toff * par["dt"]
    return (time, ii, jj, theta, phi, z), max_rate_dt


def scan_dense(R, V, par, one_sided, row_lo, row_hi, block=256):
    """Row-blocked dense scan; returns (event arrays tuple, max λ·dt)."""
    n = R.shape[0]
    chunks, max_rate = [], 0.0
    for lo in range(row_lo, row_hi, block):
        hi = min(lo + block, row_hi)
        rows = np.arange(lo, hi, dtype=np.int64)
        cols = np.arange(n, dtype=np.int64)
        ii = np.repeat(rows, n)
        jj = np.tile(cols, hi - lo)
        keep = ii != jj if one_sided else ii < jj
        ev, mx = _pair_body(R, V, ii[keep], jj[keep], par)
        max_rate = max(max_rate, mx)
        if ev[0].size:
            chunks.append(ev)
    return _concat(chunks), max_rate


def build_cells(R, cell_size):
    """Uniform binning at `cell_size`; returns the cell table used by both
    scan backends (flat id per particle, members sorted by cell, startoffsets,
    grid dims, origin)."""
    origin = R.min(axis=0)
    coords = np.floor((R - origin) / cell_size).astype(np.int64)
    dims = coords.max(axis=0) + 1
    coords = np.minimum(coords, dims - 1)
    flat = (coords[:, 0] * dims[1] + coords[:, 1]) * dims[2] + coords[:, 2]
    members = np.argsort(flat, kind="stable").astype(np.int64)
    ncells = int(dims[0] * dims[1] * dims[2])
    start = np.searchsorted(flat[members], np.arange(ncells + 1, dtype=np.int64))
    return {
        "flat": flat,
        "coords": coords,
        "members": members,
        "start": start.astype(np.int64),
        "dims": dims,
        "origin": origin,
    }


def scan_binned(R, V, par, one_sided, row_lo, row_hi, cells):
    """Neighbor-cell scan over rows [row_lo, row_hi); CSR-style expansion."""
    dims = cells["dims"]
    start, members = cells["start"], cells["members"]
    counts = np.diff(start)
    rows = np.arange(row_lo, row_hi, dtype=np.int64)
    rc = cells["coords"][rows]
    chunks, max_rate = [], 0.0
    for off in _NEIGHBOR_OFFSETS:
        nb = rc + off
        valid = np.all((nb >= 0) & (nb < dims), axis=1)
        ncid = (nb[:, 0] * dims[1] + nb[:, 1]) * dims[2] + nb[:, 2]
        cnt = np.where(valid, counts[np.where(valid, ncid, 0)], 0)
        total = int(cnt.sum())
        if total == 0:
            continue
        ii = np.repeat(rows, cnt)
        base = np.repeat(start[np.where(valid, ncid, 0)], cnt)
        csum = np.concatenate(([0], np.cumsum(cnt)[:-1]))
        pos = np.arange(total, dtype=np.int64) - np.repeat(csum, cnt)
        jj = members[base + pos]
        keep = ii != jj if one_sided else ii < jj
        ev, mx = _pair_body(R, V, ii[keep], jj[keep], par)
        max_rate = max(max_rate, mx)
        if ev[0].size:
            chunks.append(ev)
    return _concat(chunks), max_rate


def _concat(chunks):
    if not chunks:
        return (
            np.empty(0),
            np.empty(0, np.int64),
            np.empty(0, np.int64),
            np.empty(0),
            np.empty(0),
            np.empty(0),
        )
    return tuple(np.concatenate([c[k] for c in chunks]) for k in range(6))
