"""Measurements on simulated ensembles: conservation checks, moment growth,
velocity-support probes, coupling-error tables, and weak-form residuals
against the generator of the dynamics.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .kernel import beta_weight, sigma_rate, theta_quadrature
from .process import frozen_deltas
from .vecgeom import build_frame

__all__ = [
    "InsufficientSamplesWarning",
    "QuadratureError",
    "conserved_quantities",
    "moment",
    "fit_growth_slope",
    "ConeSet",
    "cone_mass",
    "support_coverage",
    "sphere_grid_26",
    "stochastic_continuity",
    "coupling_error",
    "TestFunction",
    "standard_test_bank",
    "generator_mean",
    "weak_form_residual",
    "snapshot_at",
]


class InsufficientSamplesWarning(UserWarning):
    """Monte Carlo error too large relative to the quantity being resolved."""


class QuadratureError(RuntimeError):
    """Angular quadrature did not converge under refinement."""


def conserved_quantities(e):
    """(total mass, mean velocity, mean squared speed) of the ensemble."""
    total = e.n * e.weight
    mean_v = e.velocities.mean(axis=0)
    mean_v2 = float(np.einsum("ij,ij->i", e.velocities, e.velocities).mean())
    return total, mean_v, mean_v2


def moment(e, p):
    """Empirical p-th absolute velocity moment, mean of |v|^p."""
    speed = np.linalg.norm(e.velocities, axis=1)
    return float(np.mean(speed**p))


def fit_growth_slope(times, values, discard_frac=0.1):
    """Least-squares slope of log(value) against log(time).

    The earliest `discard_frac` of the time span is discarded (transient), as
    are non-positive values.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    cut = times.max() * discard_frac
    keep = (times > cut) & (values > 0)
    if keep.sum() < 2:
        raise ValueError("need at least two usable (time, value) points")
    return float(np.polyfit(np.log(times[keep]), np.log(values[keep]), 1)[0])


@dataclass
class ConeSet:
    """Velocity region used to witness support: bounded speed, separation
    from a reference velocity u, collision rate above a floor, and relative
    velocity making a definite angle with a direction xi.  With a mollifier
    and spatial center attached, membership additionally requires the spatial
    weight to clear the same floor.
    """

    u: np.ndarray
    xi: np.ndarray
    m: float
    cross_section: object
    speed_max: float = 3.0
    separation: float = 1.0
    mollifier: object = None
    r_center: np.ndarray = None

    def contains(self, positions, velocities):
        v = np.asarray(velocities, dtype=np.float64)
        dv = v - np.asarray(self.u, dtype=np.float64)
        rel = np.linalg.norm(dv, axis=-1)
        xi = np.asarray(self.xi, dtype=np.float64)
        ok = (
            (np.linalg.norm(v, axis=-1) <= self.speed_max)
            & (rel >= self.separation)
            & (sigma_rate(self.cross_section, rel) >= self.m)
            & (np.abs(dv @ xi) >= np.linalg.norm(xi))
        )
        if self.mollifier is not None:
            r = np.asarray(positions, dtype=np.float64)
            d = r - np.asarray(self.r_center, dtype=np.float64)
            ok = ok & (beta_weight(self.mollifier, d) >= self.m)
        return ok


def cone_mass(e, cone):
    """Empirical measure of the cone set."""
    return float(np.mean(cone.contains(e.positions, e.velocities)))


def support_coverage(e, centers, radius):
    """Empirical velocity mass of the ball B(c, radius) for each center."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    d2 = ((e.velocities[None, :, :] - centers[:, None, :]) ** 2).sum(axis=2)
    return (d2 < radius * radius).mean(axis=1)


def sphere_grid_26(radius):
    """The 26 lattice directions (faces, edges, corners) scaled to a sphere."""
    pts = []
    for x in (-1, 0, 1):
        for y in (-1, 0, 1):
            for z in (-1, 0, 1):
                if x == y == z == 0:
                    continue
                d = np.array([x, y, z], dtype=np.float64)
                pts.append(radius * d / np.linalg.norm(d))
    return np.array(pts)


def snapshot_at(traj, t, tol=1e-9):
    for e in traj:
        if abs(e.t - t) <= tol:
            return e
    raise KeyError(f"no snapshot at t={t} (have {[round(e.t, 6) for e in traj]})")


def stochastic_continuity(traj, t0, deltas):
    """Mean velocity increment E|V_{t0+δ} − V_{t0}| per lag, plus the fitted
    log-log slope (small-jump activity makes this close to linear in δ)."""
    base = snapshot_at(traj, t0)
    deltas = np.asarray(deltas, dtype=np.float64)
    means = np.array(
        [
            np.linalg.norm(snapshot_at(traj, t0 + d).velocities - base.velocities, axis=1).mean()
            for d in deltas
        ]
    )
    keep = means > 0
    slope = float(np.polyfit(np.log(deltas[keep]), np.log(means[keep]), 1)[0])
    return means, slope


def coupling_error(traj, log, config, epsilons, t_eval, sample_size=None):
    """Mean distance between true and coefficient-frozen terminal velocities.

    `traj`/`log` may be single objects or per-seed lists.  Returns
    (rows, fitted_slope) where each row is (eps, mean, stderr) and the slope
    is fit on log mean vs log eps.  Warns when the Monte Carlo error is more
    than 30% of the smallest mean — the slope is then unreliable.
    """
    if hasattr(traj[0], "positions"):  # one trajectory = list of snapshots
        trajs, logs = [traj], [log]
    else:  # per-seed lists of trajectories/logs
        trajs, logs = traj, log
    kern = config.kernel()
    epsilons = np.asarray(epsilons, dtype=np.float64)
    rows = []
    for eps in epsilons:
        per_seed = []
        for tr, lg in zip(trajs, logs):
            e_prev = snapshot_at(tr, t_eval - eps)
            window = lg.window(e_prev.t, t_eval + 1e-12)
            v_true, v_frozen = frozen_deltas(e_prev, window, kern, config.scheme)
            err = np.linalg.norm(v_true - v_frozen, axis=1)
            if sample_size is not None:
                err = err[: int(sample_size)]
            per_seed.append(err.mean())
        per_seed = np.asarray(per_seed)
        mean = float(per_seed.mean())
        if per_seed.size > 1:
            stderr = float(per_seed.std(ddof=1) / math.sqrt(per_seed.size))
        else:
            stderr = float(err.std(ddof=1) / math.sqrt(err.size))
        rows.append((float(eps), mean, stderr))
    means = np.array([r[1] for r in rows])
    errs = np.array([r[2] for r in rows])
    if means.min() <= 0 or (errs / np.maximum(means, 1e-300)).max() > 0.3:
        warnings.warn(
            "Monte Carlo error exceeds 30% of the smallest coupling mean; "
            "the fitted slope is not trustworthy at these sample sizes",
            InsufficientSamplesWarning,
            stacklevel=2,
        )
        keep = means > 0
    else:
        keep = np.ones(means.size, dtype=bool)
    slope = float(np.polyfit(np.log(epsilons[keep]), np.log(means[keep]), 1)[0])
    return rows, slope


@dataclass
class TestFunction:
    """Smooth bounded observable ψ(r, v) with its spatial gradient."""

    id: str
    value: object
    grad_r: object


def _radial_bump(v, cap):
    speed2 = np.einsum("...i,...i->...", v, v)
    s = speed2 / (cap * cap)
    out = np.zeros(s.shape)
    inside = s < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    out[inside] = vals
    return out


def standard_test_bank(v_cap=2.5):
    """The five-function bank used in the weak-form checks."""
    zero = lambda r, v: np.zeros_like(r)

    def grad_tanh(r, v):
        g = np.zeros_like(r)
        g[..., 0] = (1.0 / np.cosh(r[..., 0]) ** 2) * np.tanh(v[..., 0])
        return g

    def grad_r1(r, v):
        g = np.zeros_like(r)
        g[..., 0] = 1.0
        return g

    return [
        TestFunction("const", lambda r, v: np.ones(r.shape[:-1]), zero),
        TestFunction("r1", lambda r, v: r[..., 0], grad_r1),
        TestFunction("v1", lambda r, v: v[..., 0], zero),
        TestFunction("vbump", lambda r, v, c=v_cap: _radial_bump(v, c), zero),
        TestFunction(
            "tanh_rv",
            lambda r, v: np.tanh(r[..., 0]) * np.tanh(v[..., 0]),
            grad_tanh,
        ),
    ]


def _collision_mean(e, kern, fn, n_theta, n_phi):
    """(1/N²) Σ_{ordered pairs} σβ ∫∫ [ψ(r_i, v_i+α) − ψ(r_i, v_i)] dQ dξ.

    Returns (value, gross) where gross integrates |ψ increments| instead —
    the natural scale for distinguishing cancellation noise from a genuinely
    unconverged quadrature.
    """
    mol = kern.mollifier
    pairs = cKDTree(e.positions).query_pairs(mol.r_beta, output_type="ndarray")
    if pairs.size == 0:
        return 0.0, 0.0
    ii = np.concatenate([pairs[:, 0], pairs[:, 1]])
    jj = np.concatenate([pairs[:, 1], pairs[:, 0]])
    ri = e.positions[ii]
    vi = e.velocities[ii]
    vj = e.velocities[jj]
    dr = ri - e.positions[jj]
    x_rel = vj - vi
    speed = np.linalg.norm(x_rel, axis=1)
    w_pair = sigma_rate(kern.cross_section, speed) * beta_weight(mol, dr)
    frame = build_frame(x_rel)
    base = fn.value(ri, vi)
    thetas, w_theta = theta_quadrature(kern.angular, kern.angular.theta_min, math.pi, n_theta)
    phis = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    w_phi = 2.0 * math.pi / n_phi
    acc = np.zeros(ii.size)
    acc_abs = np.zeros(ii.size)
    for theta, wt in zip(thetas, w_theta):
        c_par = math.sin(theta / 2.0) ** 2
        c_perp = 0.5 * math.sin(theta)
        for phi in phis:
            gam = math.cos(phi) * frame.i_vec + math.sin(phi) * frame.j_vec
            v_post = vi + c_par * x_rel + c_perp * gam
            inc = fn.value(ri, v_post) - base
            acc += (wt * w_phi) * inc
            acc_abs += (wt * w_phi) * np.abs(inc)
    norm = e.n * e.n
    return float(np.sum(w_pair * acc)) / norm, float(np.sum(w_pair * acc_abs)) / norm


def generator_mean(e, kern, fn, n_theta=96, n_phi=16, check_convergence=True, rtol=1e-5):
    """Ensemble average of the generator applied to ψ: transport plus the
    pairwise jump integral at the simulation's angular cutoff.

    Raises QuadratureError when doubling the θ-node count moves the collision
    term by more than `rtol` relative — relative to the term itself or, when
    the signed sum cancels, to the gross increment integral.
    """
    transport = float(
        np.einsum("ij,ij->i", e.velocities, fn.grad_r(e.positions, e.velocities)).mean()
    )
    coll, gross = _collision_mean(e, kern, fn, n_theta, n_phi)
    if check_convergence:
        coll2, _ = _collision_mean(e, kern, fn, 2 * n_theta, n_phi)
        diff = abs(coll2 - coll)
        if diff > rtol * max(abs(coll), abs(coll2)) and diff > 1e-12 * gross:
            raise QuadratureError(
                f"collision quadrature for '{fn.id}' moved by {diff:.2e} "
                f"(vs value {coll:.2e}, gross {gross:.2e}) when doubling θ nodes"
            )
        coll = coll2
    return transport + coll


def weak_form_residual(traj, kern, test_bank, t_eval, delta, mode="centered",
                       n_theta=96, n_phi=16):
    """Residual of the weak form d/dt⟨ψ⟩ = ⟨generator ψ⟩ per test function.

    The time derivative is a finite difference of snapshot averages over the
    probe spacing `delta` (decoupled from the simulation step): centered for
    second-order accuracy, forward when the first-order bias itself is the
    object of interest.  Returns {id: (residual, d_dt, gen_mean)}.
    """
    e_mid = snapshot_at(traj, t_eval)
    e_plus = snapshot_at(traj, t_eval + delta)
    if mode == "centered":
        e_minus = snapshot_at(traj, t_eval - delta)
        span = 2.0 * delta
    elif mode == "forward":
        e_minus = e_mid
        span = delta
    else:
        raise ValueError("mode must be 'centered' or 'forward'")
    out = {}
    for fn in test_bank:
        lo = float(fn.value(e_minus.positions, e_minus.velocities).mean())
        hi = float(fn.value(e_plus.positions, e_plus.velocities).mean())
        d_dt = (hi - lo) / span
        gen = generator_mean(e_mid, kern, fn, n_theta=n_theta, n_phi=n_phi)
        out[fn.id] = (d_dt - gen, d_dt, gen)
    return out
