"""Empirical density-regularity harness.

The criterion: if the shifted-test-function functional
I_h(φ) = |mean(φ(V+h) − φ(V))| is bounded by κ‖φ‖·|h|^a uniformly over a
Hölder ball and an h sweep, the velocity law behaves like one with a density
of positive Besov regularity.  This module provides Hölder test functions
with certified norms, the functional, the κ estimate with its (γ, ν)
admissibility window, kernel density estimates, and a lattice Besov seminorm.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

__all__ = [
    "AdmissibilityError",
    "HolderTestFn",
    "make_bump",
    "make_ramp",
    "make_cusp",
    "standard_phi_bank",
    "spot_check",
    "finite_diff_functional",
    "admissible_c_interval",
    "BesovRow",
    "besov_estimate",
    "default_h_grid",
    "DensityField",
    "kde_density",
    "silverman_bandwidth",
    "besov_seminorm",
]


class AdmissibilityError(ValueError):
    """The shift/window tradeoff exponent interval is empty for (γ, ν)."""


@dataclass
class HolderTestFn:
    """Test function with a certified Hölder norm.

    norm_bound certifies both |φ| ≤ norm_bound and
    |φ(x)−φ(y)| ≤ norm_bound·|x−y|^hol_alpha; for a bounded-Lipschitz member
    the seminorm certificate is the interpolation (2B)^{1−α}L^α.
    """

    id: str
    hol_alpha: float
    family: str
    params: dict
    norm_bound: float
    fn: object = field(repr=False)

    def __post_init__(self):
        if not 0.0 < self.hol_alpha < 1.0:
            raise ValueError("hol_alpha must be in (0,1)")
        if self.norm_bound <= 0:
            raise ValueError("norm_bound must be positive")

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=np.float64))


def _holder_norm_from_lipschitz(bound, lip, alpha):
    return bound + (2.0 * bound) ** (1.0 - alpha) * lip**alpha


def make_bump(hol_alpha, center=(0.0, 0.0, 0.0), radius=1.0):
    """Smooth compactly supported bump; Lipschitz constant found numerically
    on the radial profile (with a small safety factor) and interpolated to a
    Hölder certificate."""
    center = np.asarray(center, dtype=np.float64)
    s = np.linspace(0.0, 1.0 - 1e-9, 200001)
    with np.errstate(divide="ignore", over="ignore"):
        prof = np.exp(1.0 - 1.0 / (1.0 - s * s))
        dprof = prof * (-2.0 * s / (1.0 - s * s) ** 2)
    lip = 1.05 * float(np.nanmax(np.abs(dprof))) / radius

    def fn(x, c=center, r=radius):
        d2 = ((np.atleast_2d(x) - c) ** 2).sum(axis=-1) / (r * r)
        out = np.zeros_like(d2)
        inside = d2 < 1.0
        with np.errstate(divide="ignore", over="ignore"):
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - d2[inside]))
        return out

    return HolderTestFn(
        id=f"bump_r{radius:g}",
        hol_alpha=hol_alpha,
        family="bump",
        params={"center": center.tolist(), "radius": radius},
        norm_bound=_holder_norm_from_lipschitz(1.0, lip, hol_alpha),
        fn=fn,
    )


def make_ramp(hol_alpha, axis=0, offset=0.0):
    """Clipped coordinate ramp clamp(x_axis − offset, −1, 1): bound 1,
    Lipschitz 1."""

    def fn(x, k=axis, c=offset):
        return np.clip(np.atleast_2d(x)[..., k] - c, -1.0, 1.0)

    return HolderTestFn(
        id=f"ramp_x{axis + 1}",
        hol_alpha=hol_alpha,
        family="ramp",
        params={"axis": axis, "offset": offset},
        norm_bound=_holder_norm_from_lipschitz(1.0, 1.0, hol_alpha),
        fn=fn,
    )


def make_cusp(hol_alpha, center=(0.0, 0.0, 0.0)):
    """Genuinely rough member 1 − min(|x−x₀|^α, 1): exactly Hölder-α with
    seminorm 1 and bound 1, so the certified norm is exactly 2."""
    center = np.asarray(center, dtype=np.float64)

    def fn(x, c=center, al=hol_alpha):
        d = np.linalg.norm(np.atleast_2d(x) - c, axis=-1)
        return 1.0 - np.minimum(d**al, 1.0)

    return HolderTestFn(
        id="cusp",
        hol_alpha=hol_alpha,
        family="cusp",
        params={"center": center.tolist()},
        norm_bound=2.0,
        fn=fn,
    )


def standard_phi_bank(hol_alpha):
    """Bumps at two scales, a clipped ramp, and a rough cusp."""
    return [
        make_bump(hol_alpha, radius=1.0),
        make_bump(hol_alpha, radius=0.25),
        make_ramp(hol_alpha),
        make_cusp(hol_alpha),
    ]


def spot_check(phi, n_pairs=10_000, seed=0, scale=2.0):
    """Sample point pairs (including near-coincident ones) and count
    violations of the certified bound and Hölder inequality.  Returns
    (max_ratio, n_violations)."""
    g = np.random.default_rng(seed)
    x = scale * g.standard_normal((n_pairs, 3))
    y = np.where(
        g.random((n_pairs, 1)) < 0.5,
        x + 10.0 ** g.uniform(-6, 0, (n_pairs, 1)) * g.standard_normal((n_pairs, 3)),
        scale * g.standard_normal((n_pairs, 3)),
    )
    fx = phi(x)
    fy = phi(y)
    dist = np.linalg.norm(x - y, axis=-1)
    ok = dist > 0
    ratio = np.abs(fx - fy)[ok] / dist[ok] ** phi.hol_alpha
    viol = int((ratio > phi.norm_bound * (1 + 1e-12)).sum())
    viol += int((np.abs(fx) > phi.norm_bound * (1 + 1e-12)).sum())
    return float(ratio.max()), viol


def finite_diff_functional(sample, phi, h):
    """|mean φ(V+h) − φ(V)| over the sample; requires |h| ≤ 1."""
    h = np.asarray(h, dtype=np.float64)
    if np.linalg.norm(h) > 1.0 + 1e-12:
        raise ValueError(f"|h| must be <= 1, got {np.linalg.norm(h)}")
    v = np.asarray(sample, dtype=np.float64)
    return float(abs(np.mean(phi(v + h)) - np.mean(phi(v))))


def admissible_c_interval(gamma, nu):
    """Exponent window for the shift-coupled window size ε = |h|^c.

    The window is ((γ+1)/(2γ+1), ν); raises AdmissibilityError when it is
    empty, naming the offending parameters.
    """
    lo = (gamma + 1.0) / (2.0 * gamma + 1.0)
    hi = nu
    if lo >= hi:
        raise AdmissibilityError(
            f"admissible c-interval ((gamma+1)/(2*gamma+1), nu) = "
            f"({lo:.6g}, {hi:.6g}) is empty for gamma={gamma:g}, nu={nu:g}"
        )
    return lo, hi


def default_h_grid(n_mags=16, h_min=1e-3, h_max=1.0):
    """16 log-spaced magnitudes crossed with three fixed directions."""
    mags = np.geomspace(h_min, h_max, n_mags)
    dirs = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 1.0] / np.sqrt(3.0),
        ]
    )
    return [m * d for m in mags for d in dirs]


@dataclass
class BesovRow:
    phi_id: str
    h_mag: float
    value: float
    ratio: float
    mc_stderr: float
    eps_tradeoff: float


def besov_estimate(sample, hol_alpha, a, h_grid=None, phi_bank=None, *,
                   gamma, nu):
    """Empirical regularity constant over a Hölder bank and an h sweep.

    kappa_hat is the largest I_h(φ)/(‖φ‖·|h|^a); each row also records the
    matched window size ε = |h|^c at the midpoint of the admissible c-window
    for (γ, ν) — computed first so inadmissible parameters fail loudly.
    Requires 0 < hol_alpha < a < 1.
    """
    if not 0.0 < hol_alpha < a < 1.0:
        raise ValueError(
            f"need 0 < hol_alpha < a < 1, got hol_alpha={hol_alpha}, a={a}"
        )
    c_lo, c_hi = admissible_c_interval(gamma, nu)
    c_mid = 0.5 * (c_lo + c_hi)
    if h_grid is None:
        h_grid = default_h_grid()
    if phi_bank is None:
        phi_bank = standard_phi_bank(hol_alpha)
    v = np.asarray(sample, dtype=np.float64)
    n = v.shape[0]
    rows = []
    for phi in phi_bank:
        base = phi(v)
        for h in h_grid:
            h = np.asarray(h, dtype=np.float64)
            h_mag = float(np.linalg.norm(h))
            diff = phi(v + h) - base
            value = float(abs(diff.mean()))
            stderr = float(diff.std(ddof=1) / math.sqrt(n))
            ratio = value / (phi.norm_bound * h_mag**a)
            rows.append(
                BesovRow(phi.id, h_mag, value, ratio, stderr, h_mag**c_mid)
            )
    kappa_hat = max(r.ratio for r in rows)
    return kappa_hat, rows


@dataclass
class DensityField:
    """Density values at the cell centers of a regular velocity-box lattice."""

    axes: list
    values: np.ndarray
    bandwidth: float

    @property
    def spacing(self):
        return [float(ax[1] - ax[0]) for ax in self.axes]

    @property
    def voxel(self):
        return float(np.prod(self.spacing))

    def integral(self):
        vals = self.values
        for k in range(3):
            vals = np.trapezoid(vals, self.axes[k], axis=0)
        return float(vals)


def _box_edges(box, resolution):
    box = np.asarray(box, dtype=np.float64)
    if box.ndim == 0:
        box = np.array([[-box, box]] * 3)
    return [np.linspace(lo, hi, resolution + 1) for lo, hi in box]


def kde_density(sample, bandwidth, box, resolution=64):
    """Gaussian-kernel density estimate on a regular grid.

    Implemented as a histogram (counts / (N·voxel)) smoothed by a Gaussian
    filter of width `bandwidth` in velocity units; normalization matches the
    in-box sample fraction when the box encloses the smoothed mass.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    v = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    edges = _box_edges(box, resolution)
    counts, _ = np.histogramdd(v, bins=edges)
    axes = [0.5 * (e[:-1] + e[1:]) for e in edges]
    spacing = [e[1] - e[0] for e in edges]
    dens = counts / (v.shape[0] * np.prod(spacing))
    sigma = [bandwidth / d for d in spacing]
    smooth = ndimage.gaussian_filter(dens, sigma=sigma, mode="constant")
    return DensityField(axes=axes, values=smooth, bandwidth=float(bandwidth))


def silverman_bandwidth(sample):
    """Rule-of-thumb bandwidth: mean per-axis spread times n^{−1/7}."""
    v = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    return float(v.std(axis=0, ddof=1).mean() * v.shape[0] ** (-1.0 / 7.0))


def _shift_vectors(spacing, max_norm=1.0):
    """Integer lattice shifts with 0 < |h| ≤ max_norm: all multiples of the
    axis, face-diagonal, and body-diagonal directions."""
    dirs = []
    for d in (
        (1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 0), (1, 0, 1), (0, 1, 1),
        (1, 1, 1),
    ):
        step = math.sqrt(sum((k * s) ** 2 for k, s in zip(d, spacing)))
        n_max = int(max_norm / step)
        for m in range(1, n_max + 1):
            dirs.append((tuple(m * k for k in d), m * step))
    return dirs


def besov_seminorm(fld, s):
    """L¹ norm plus the lattice sup of |h|^{−s}·‖f(·+h) − f‖_{L¹}.

    Shifts use periodic padding, so the value is exactly translation
    invariant on the lattice; only |h| ≤ 1 shifts enter, making the result
    nondecreasing in s.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must be in (0,1)")
    vox = fld.voxel
    l1 = float(np.abs(fld.values).sum() * vox)
    best = 0.0
    for shift, h_mag in _shift_vectors(fld.spacing):
        rolled = np.roll(fld.values, shift, axis=(0, 1, 2))
        diff = float(np.abs(rolled - fld.values).sum() * vox)
        best = max(best, diff / h_mag**s)
    return l1 + best
