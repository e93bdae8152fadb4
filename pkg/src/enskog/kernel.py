"""Collision kernel ingredients.

* AngularMeasure: truncated power-law density b(θ) = b_coeff·θ^(−1−ν) on
  [theta_min, π], with closed-form mass and inverse-CDF sampling.
* CrossSection: σ(z) = c_sigma·(1+z²)^(γ/2).
* SpatialMollifier: smooth bump of compact support radius r_beta.
* pair_rate: per-ordered-pair collision intensity of the N-particle system,
  λ_ij = (1/N)·β(r_i−r_j)·σ(|v_i−v_j|)·Λ_Q·2π with Λ_Q the total angular mass
  (azimuth circle carries total mass 2π).
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AngularMeasure",
    "CrossSection",
    "SpatialMollifier",
    "CollisionKernel",
    "angular_mass",
    "sample_theta",
    "theta_cdf",
    "sigma_rate",
    "beta_weight",
    "beta_gradient",
    "pair_rate",
    "theta_quadrature",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AngularMeasure:
    """Angular measure Q(dθ) = b_coeff·θ^(−1−ν) dθ truncated to [theta_min, π]."""

    nu: float
    b_coeff: float = 1.0
    theta_min: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must lie in (0,1), got {self.nu}")
        if self.b_coeff <= 0.0:
            raise ValueError(f"b_coeff must be positive, got {self.b_coeff}")
        if not 0.0 < self.theta_min < math.pi:
            raise ValueError(f"theta_min must lie in (0,pi), got {self.theta_min}")

    def density(self, theta):
        return self.b_coeff * np.asarray(theta, dtype=np.float64) ** (-1.0 - self.nu)

    @property
    def total_mass(self):
        return angular_mass(self, self.theta_min, math.pi)


@dataclass(frozen=True)
class CrossSection:
    """Velocity cross-section σ(z) = c_sigma·(1+z²)^(γ/2), γ in (0,2), c_sigma ≥ 1."""

    gamma: float
    c_sigma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 2.0:
            raise ValueError(f"gamma must lie in (0,2), got {self.gamma}")
        if self.c_sigma < 1.0:
            raise ValueError(f"c_sigma must be >= 1, got {self.c_sigma}")


@dataclass(frozen=True)
class SpatialMollifier:
    """Smooth bump amplitude·exp(1 − 1/(1−|d/r_beta|²)) supported in |d| < r_beta."""

    r_beta: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.r_beta <= 0.0:
            raise ValueError(f"r_beta must be positive, got {self.r_beta}")
        if self.amplitude <= 0.0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")


@dataclass(frozen=True)
class CollisionKernel:
    """Bundle of the three kernel ingredients."""

    angular: AngularMeasure
    cross_section: CrossSection
    mollifier: SpatialMollifier

    @classmethod
    def from_params(cls, nu, b_coeff, theta_min, gamma, c_sigma, r_beta, amplitude):
        return cls(
            AngularMeasure(nu=nu, b_coeff=b_coeff, theta_min=theta_min),
            CrossSection(gamma=gamma, c_sigma=c_sigma),
            SpatialMollifier(r_beta=r_beta, amplitude=amplitude),
        )

    @property
    def rate_prefactor(self):
        """Λ_Q·2π: total angular × azimuth mass entering every pair rate."""
        return self.angular.total_mass * TWO_PI


def angular_mass(m, lo, hi):
    """∫_lo^hi b_coeff·θ^(−1−ν) dθ = b_coeff·(lo^(−ν) − hi^(−ν))/ν.

    Raises ValueError if lo < theta_min (below the cutoff) or the interval is
    outside [theta_min, π].
    """
    if lo < m.theta_min * (1.0 - 1e-12):
        raise ValueError(f"lower bound {lo} below angular cutoff {m.theta_min}")
    if hi > math.pi * (1.0 + 1e-12):
        raise ValueError(f"upper bound {hi} above pi")
    if lo > hi:
        raise ValueError(f"empty interval: lo={lo} > hi={hi}")
    return m.b_coeff * (lo**-m.nu - hi**-m.nu) / m.nu


def theta_cdf(m, theta):
    """CDF of the normalized angular measure on [theta_min, π]."""
    theta = np.clip(np.asarray(theta, dtype=np.float64), m.theta_min, math.pi)
    a = m.theta_min**-m.nu
    return (a - theta**-m.nu) / (a - math.pi**-m.nu)


def sample_theta(m, U):
    """Inverse-CDF sample θ(U) = (theta_min^(−ν) − U·ν·Λ/b_coeff)^(−1/ν).

    U in [0,1]; U=0 gives theta_min, U=1 gives π.  Vectorized.
    """
    U = np.asarray(U, dtype=np.float64)
    a = m.theta_min**-m.nu
    span = m.nu * m.total_mass / m.b_coeff
    theta = (a - U * span) ** (-1.0 / m.nu)
    return np.clip(theta, m.theta_min, math.pi)


def sigma_rate(cs, rel_speed):
    """σ(rel_speed) = c_sigma·(1+rel_speed²)^(γ/2); nondecreasing."""
    z = np.asarray(rel_speed, dtype=np.float64)
    return cs.c_sigma * (1.0 + z * z) ** (0.5 * cs.gamma)


def beta_weight(b, displacement):
    """Smooth bump value at a displacement vector (vectorized over (...,3))."""
    d = np.asarray(displacement, dtype=np.float64)
    s2 = np.sum(d * d, axis=-1) / (b.r_beta * b.r_beta)
    inside = s2 < 1.0
    denom = np.where(inside, 1.0 - s2, 1.0)
    val = b.amplitude * np.exp(1.0 - 1.0 / denom)
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def beta_gradient(b, displacement):
    """Analytic gradient of beta_weight at a displacement (zero outside support)."""
    d = np.asarray(displacement, dtype=np.float64)
    r2 = b.r_beta * b.r_beta
    s2 = np.sum(d * d, axis=-1, keepdims=True) / r2
    inside = s2 < 1.0
    denom = np.where(inside, 1.0 - s2, 1.0)
    val = b.amplitude * np.exp(1.0 - 1.0 / denom)
    grad = val * (-2.0 * d / r2) / (denom * denom)
    return np.where(inside, grad, 0.0)


def pair_rate(kernel, p_i, p_j, n_particles):
    """Per-ordered-pair intensity λ_ij = (1/N)·β(r_i−r_j)·σ(|v_i−v_j|)·Λ_Q·2π."""
    if n_particles < 2:
        raise ValueError("pair_rate needs n_particles >= 2")
    dr = np.asarray(p_i.r, dtype=np.float64) - np.asarray(p_j.r, dtype=np.float64)
    dv = np.asarray(p_i.v, dtype=np.float64) - np.asarray(p_j.v, dtype=np.float64)
    beta = beta_weight(kernel.mollifier, dr)
    sig = sigma_rate(kernel.cross_section, math.sqrt(float(np.dot(dv, dv))))
    return float(beta) * float(sig) * kernel.rate_prefactor / n_particles


def theta_quadrature(m, lo, hi, n_nodes):
    """Gauss-Legendre nodes/weights in log θ for ∫ f(θ)·b(θ) dθ over [lo, hi].

    Returns (theta, w) with Σ w·f(theta) ≈ the integral; the b(θ)·θ Jacobian
    of the log substitution is folded into the weights.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    y, wy = np.polynomial.legendre.leggauss(int(n_nodes))
    ylo, yhi = math.log(lo), math.log(hi)
    theta = np.exp(0.5 * (yhi - ylo) * y + 0.5 * (yhi + ylo))
    w = 0.5 * (yhi - ylo) * wy * m.density(theta) * theta
    return theta, w
