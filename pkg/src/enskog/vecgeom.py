"""Collision geometry: tangent frames, deflections, post-collision velocities.

All functions are vectorized over leading axes; a "vector" is any float array
whose last axis has length 3.  Conventions:

* ``build_frame(X)`` returns two vectors of length |X| spanning the plane
  orthogonal to X (the zero vector gets the zero frame).
* ``deflection(v, u, theta, phi)`` is the velocity increment of the particle
  with velocity v colliding with a partner at velocity u, at scattering angle
  theta and azimuth phi; its norm is exactly sin(theta/2)·|v−u|.
* ``post_collision`` applies the increment to both partners, conserving
  momentum and kinetic energy.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CollisionFrame",
    "build_frame",
    "azimuth_vector",
    "deflection",
    "post_collision",
    "tanaka_shift",
    "mirror_azimuth",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CollisionFrame:
    """Scaled tangent frame of a base vector X: |i_vec| = |j_vec| = |X|,
    both orthogonal to X and to each other.  Zero X gives the zero frame."""

    i_vec: np.ndarray
    j_vec: np.ndarray


def _unit_frame(x):
    """Unit tangent frame (i_hat, j_hat) of x, zero rows for zero x.

    Deterministic convention: take the coordinate axis with the smallest
    |component| of x (ties break to the lowest index), project out x, and
    normalize; the second leg is the cross product.  Branch-free and stable.
    """
    x = np.asarray(x, dtype=np.float64)
    n2 = np.sum(x * x, axis=-1, keepdims=True)
    safe = np.where(n2 > 0.0, n2, 1.0)
    k = np.argmin(np.abs(x), axis=-1)
    e = np.zeros_like(x)
    np.put_along_axis(e, k[..., None], 1.0, axis=-1)
    xk = np.take_along_axis(x, k[..., None], axis=-1)
    raw = e - (xk / safe) * x
    rn = np.sqrt(np.sum(raw * raw, axis=-1, keepdims=True))
    rn = np.where(rn > 0.0, rn, 1.0)
    i_hat = raw / rn
    j_hat = np.cross(x, i_hat)
    jn = np.sqrt(np.sum(j_hat * j_hat, axis=-1, keepdims=True))
    jn = np.where(jn > 0.0, jn, 1.0)
    j_hat = j_hat / jn
    nz = (n2 > 0.0).astype(np.float64)
    return i_hat * nz, j_hat * nz


def build_frame(X):
    """Scaled tangent frame of X as a CollisionFrame."""
    X = np.asarray(X, dtype=np.float64)
    norm = np.sqrt(np.sum(X * X, axis=-1, keepdims=True))
    i_hat, j_hat = _unit_frame(X)
    return CollisionFrame(i_vec=i_hat * norm, j_vec=j_hat * norm)


def azimuth_vector(X, phi):
    """Vector of norm |X| orthogonal to X at azimuth phi on the tangent circle:
    cos(phi)·i_vec + sin(phi)·j_vec of the frame of X."""
    X = np.asarray(X, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)[..., None]
    f = build_frame(X)
    return np.cos(phi) * f.i_vec + np.sin(phi) * f.j_vec


def deflection(v, u, theta, phi):
    """Velocity increment sin²(θ/2)(u−v) + (sinθ/2)·azimuth_vector(u−v, φ).

    |deflection| = sin(θ/2)|v−u| ≤ ½θ|v−u|; identically 0 when v = u.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)[..., None]
    x = u - v
    s_half = np.sin(0.5 * theta)
    return s_half * s_half * x + 0.5 * np.sin(theta) * azimuth_vector(x, phi)


def post_collision(v, u, theta, phi):
    """Post-collision pair (v + d, u − d) with d = deflection(v, u, θ, φ).

    Conserves momentum exactly (same increment added and subtracted), kinetic
    energy to rounding, and the relative speed |v−u|.
    """
    d = deflection(v, u, theta, phi)
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return v + d, u - d


def mirror_azimuth(phi):
    """Azimuth φ' with deflection(u, v, θ, φ') == −deflection(v, u, θ, φ).

    Under the frame convention here, the frame of −X shares the first leg with
    the frame of X and flips the second, so φ' = π − φ (mod 2π).
    """
    return np.mod(np.pi - np.asarray(phi, dtype=np.float64), TWO_PI)


def tanaka_shift(v, u, v_star, u_star, phi=0.0):
    """Azimuth shift aligning the tangent frame of u−v with that of u⋆−v⋆.

    Returns the angle ξ₀ maximizing ⟨î(u−v), cos ξ₀·î(u⋆−v⋆) +
    sin ξ₀·ĵ(u⋆−v⋆)⟩, i.e. the rotation making the two deflection frames
    agree at azimuth 0.  The shift is independent of `phi` (frame alignment is
    a rigid rotation); the argument is accepted for signature compatibility.
    Degenerate relative velocities return 0.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    x = u - v
    y = np.asarray(u_star, dtype=np.float64) - np.asarray(v_star, dtype=np.float64)
    ix, _ = _unit_frame(x)
    iy, jy = _unit_frame(y)
    a = np.sum(ix * iy, axis=-1)
    b = np.sum(ix * jy, axis=-1)
    shift = np.mod(np.arctan2(b, a), TWO_PI)
    ok = (np.sum(x * x, axis=-1) > 0.0) & (np.sum(y * y, axis=-1) > 0.0)
    out = np.where(ok, shift, 0.0)
    return out[()] if out.ndim == 0 else out
