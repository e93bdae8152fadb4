"""Tests for the small-jump characteristic exponent and its certificates.

The independent oracle collapses the azimuth integral with the identity
(1/2π)∫ e^{i(p cosφ + q sinφ)} dφ = J₀(√(p²+q²)), reducing ψ to a
one-dimensional θ-integral that scipy.integrate.quad evaluates on a log
axis — a fully separate code path from the tensor Gauss-Legendre rule.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, special

from conftest import tiny_config
from enskog.charfn import (
    CharExponentQuery,
    CopyPaths,
    DivergentIntegralError,
    ecf_compare,
    grad_density_bound,
    jump_moments,
    lower_bound_check,
    psi,
    simulate_small_jump_increments,
    theta_cutoff,
)
from enskog.kernel import beta_weight, sigma_rate
from enskog.observables import QuadratureError
from enskog.process import run


def _query(freq, eps=0.3, v0=(0.2, -0.1, 0.4), r0=(0.0, 0.0, 0.0)):
    return CharExponentQuery(
        eps=eps,
        t=eps + 0.2,
        v0=np.asarray(v0, dtype=float),
        r0=np.asarray(r0, dtype=float),
        freq=np.asarray(freq, dtype=float),
    )


def _constant_copies(rng, n_copies=6, t_lo=0.0, t_hi=0.25):
    """Frozen background: spread velocities, positions well inside the
    mollifier support so every copy carries positive weight."""
    u = 1.2 * rng.standard_normal((n_copies, 3))
    pos = 0.12 * rng.standard_normal((n_copies, 3))
    return CopyPaths.constant(u, pos, t_lo, t_hi)


def _psi_bessel_oracle(q, paths, kern, theta_floor=1e-8):
    """ψ via scipy quadrature of the J₀-reduced integrand (per copy, per
    node), independent of the module's frame construction and tensor rule."""
    nu = kern.angular.nu
    b = kern.angular.b_coeff
    cutoff = theta_cutoff(q, nu)
    kappa = q.freq
    k2 = float(kappa @ kappa)
    total = 0.0 + 0.0j
    for node in range(len(paths.times)):
        ds = paths.ds[node]
        u_node = paths.velocity_nodes[node]
        pos_node = paths.position_nodes[node]
        acc = 0.0 + 0.0j
        for c in range(u_node.shape[0]):
            x = u_node[c] - q.v0
            speed = float(np.linalg.norm(x))
            if speed == 0.0:
                continue
            w = float(
                sigma_rate(kern.cross_section, speed)
                * beta_weight(kern.mollifier, q.r0 - pos_node[c])
            )
            if w == 0.0:
                continue
            a_par = float(x @ kappa)
            # legs of the deflection frame carry |X|, so the azimuth radius is
            # |X|·|κ_perp| = sqrt(|κ|²|X|² − (κ·X)²)
            perp = math.sqrt(max(k2 * speed**2 - a_par**2, 0.0))

            def integrand(y, part):
                theta = math.exp(y)
                c_par = math.sin(theta / 2.0) ** 2
                c_perp = 0.5 * math.sin(theta)
                inner = 1.0 - np.exp(1j * c_par * a_par) * special.j0(c_perp * perp)
                val = 2.0 * math.pi * b * theta**-nu * inner
                return val.real if part == 0 else val.imag

            lo, hi = math.log(theta_floor), math.log(cutoff)
            re, _ = integrate.quad(integrand, lo, hi, args=(0,), limit=200)
            im, _ = integrate.quad(integrand, lo, hi, args=(1,), limit=200)
            acc += w * complex(re, im)
        total += ds * acc / u_node.shape[0]
    return total


def test_exponent_at_zero_frequency_is_zero(kern, rng):
    paths = _constant_copies(rng)
    assert psi(_query([0.0, 0.0, 0.0]), paths, kern) == 0.0


def test_exponent_vanishes_below_angle_floor(kern, rng):
    paths = _constant_copies(rng)
    q = _query([3.0, -1.0, 2.0], eps=1e-6)
    assert theta_cutoff(q, kern.angular.nu) < 1e-8
    assert psi(q, paths, kern) == 0.0


def test_exponent_positivity_and_conjugate_symmetry(kern, rng):
    paths = _constant_copies(rng, n_copies=4)
    for _ in range(1000):
        kappa = rng.standard_normal(3) * rng.choice([0.5, 2.0, 8.0])
        q = _query(kappa, eps=float(rng.uniform(0.05, 0.6)),
                   v0=0.8 * rng.standard_normal(3))
        val = psi(q, paths, kern, n_theta=12, n_phi=8, check_convergence=False)
        mirrored = psi(replace(q, freq=-q.freq), paths, kern,
                       n_theta=12, n_phi=8, check_convergence=False)
        assert val.real >= -1e-15 * (1.0 + abs(val))
        assert np.isclose(mirrored, val.conjugate(), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize(
    "freq,eps",
    [
        ((1.4, -0.7, 0.9), 0.3),
        ((0.0, 0.0, 4.0), 0.2),
        ((6.0, 2.0, -1.5), 0.45),
    ],
)
def test_exponent_matches_bessel_quadrature_oracle(kern, rng, freq, eps):
    paths = _constant_copies(rng)
    q = _query(freq, eps=eps)
    val = psi(q, paths, kern)
    oracle = _psi_bessel_oracle(q, paths, kern)
    assert abs(val - oracle) <= 1e-5 * max(abs(oracle), 1e-6)


def test_exponent_oracle_agrees_on_multi_node_paths(kern, rng):
    u0 = 1.2 * rng.standard_normal((5, 3))
    u1 = 1.2 * rng.standard_normal((5, 3))
    pos0 = 0.12 * rng.standard_normal((5, 3))
    pos1 = 0.12 * rng.standard_normal((5, 3))
    paths = CopyPaths([0.0, 0.11], [u0, u1], [pos0, pos1], 0.0, 0.25)
    assert np.allclose(paths.ds, [0.11, 0.14])
    q = _query([2.0, -1.0, 0.5], eps=0.35)
    val = psi(q, paths, kern)
    oracle = _psi_bessel_oracle(q, paths, kern)
    assert abs(val - oracle) <= 1e-5 * abs(oracle)


def test_exponent_zero_for_comoving_coincident_copy(kern):
    v0 = np.array([0.3, -0.2, 0.5])
    paths = CopyPaths.constant(np.tile(v0, (3, 1)), np.zeros((3, 3)), 0.0, 0.25)
    q = _query([2.0, 1.0, -1.0], v0=v0)
    assert psi(q, paths, kern) == 0.0


def test_quadrature_guard_trips_on_coarse_mesh(kern, rng):
    paths = _constant_copies(rng)
    q = _query(30.0 * np.array([0.36, 0.48, 0.80]), eps=0.4)
    with pytest.raises(QuadratureError):
        psi(q, paths, kern, n_theta=4, n_phi=4, rtol=1e-9)
    psi(q, paths, kern)  # default mesh converges for the same query


def test_query_validation_rejects_bad_windows():
    v = np.zeros(3)
    with pytest.raises(ValueError, match="eps must be in"):
        CharExponentQuery(eps=0.0, t=1.0, v0=v, r0=v, freq=v)
    with pytest.raises(ValueError, match="eps must be in"):
        CharExponentQuery(eps=1.0, t=2.0, v0=v, r0=v, freq=v)
    with pytest.raises(ValueError, match="eps < t"):
        CharExponentQuery(eps=0.5, t=0.5, v0=v, r0=v, freq=v)


def test_copy_paths_validation():
    v = np.zeros((2, 3))
    with pytest.raises(ValueError, match="nonempty"):
        CopyPaths([], [], [], 0.0, 1.0)
    with pytest.raises(ValueError, match="strictly increasing"):
        CopyPaths([0.0, 0.0], [v, v], [v, v], 0.0, 1.0)
    with pytest.raises(ValueError, match="window start"):
        CopyPaths([0.1], [v], [v], 0.0, 1.0)
    with pytest.raises(ValueError, match="strictly before"):
        CopyPaths([0.0, 1.0], [v, v], [v, v], 0.0, 1.0)
    paths = CopyPaths([0.0, 0.3], [v, v], [v, v], 0.0, 1.0)
    assert np.allclose(paths.ds, [0.3, 0.7])
    assert paths.n_copies == 2


def test_copy_paths_from_trajectory_window(kern):
    cfg = tiny_config(snapshot_every=1, amplitude=0.3)
    snaps, _ = run(cfg)
    paths = CopyPaths.from_trajectory(snaps, t_lo=0.1, t_hi=0.2)
    assert paths.n_copies == cfg.n_particles
    assert len(paths.times) == 10
    assert math.isclose(paths.times[0], 0.1)
    assert paths.times[-1] < 0.2
    assert math.isclose(float(paths.ds.sum()), 0.1)
    q = _query([1.0, 0.0, 0.0], eps=0.1)
    assert psi(q, paths, kern).real >= 0.0


def test_lower_bound_certificate_structure(kern, rng):
    paths = _constant_copies(rng, n_copies=8)
    q0 = _query([0.0, 0.0, 0.0], eps=0.25)
    dirs = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.6, 0.8])]
    grid = [np.zeros(3)] + [m * d for m in (0.5, 1.0, 2.0, 5.0, 10.0) for d in dirs]
    report = lower_bound_check(q0, grid, paths, kern)
    assert report.passed and report.c > 0.0
    assert len(report.rows) == len(grid) - 1  # zero frequency excluded
    nu = kern.angular.nu
    for kmag, re_val, shape, ratio in report.rows:
        assert shape == min(kmag**2, kmag**nu)
        assert ratio == re_val / shape
        assert re_val >= report.c * shape - 1e-12
    assert report.c == min(r[3] for r in report.rows)


def test_jump_moments_match_quadrature_oracle(kern, rng):
    u0 = 1.2 * rng.standard_normal((5, 3))
    u1 = 1.2 * rng.standard_normal((5, 3))
    pos0 = 0.12 * rng.standard_normal((5, 3))
    pos1 = 0.12 * rng.standard_normal((5, 3))
    paths = CopyPaths([0.0, 0.09], [u0, u1], [pos0, pos1], 0.0, 0.2)
    q = _query([0.0, 0.0, 0.0], eps=0.2)
    floor = 1e-8
    moments = jump_moments(q, paths, kern, theta_floor=floor)

    nu = kern.angular.nu
    b = kern.angular.b_coeff
    cutoff = theta_cutoff(q, nu)

    def theta_integral(power):
        val, _ = integrate.quad(
            lambda y: b * math.exp(y) ** -nu * math.sin(math.exp(y) / 2.0) ** power,
            math.log(floor),
            math.log(cutoff),
            limit=200,
        )
        return val

    s1 = s4 = 0.0
    for node in range(2):
        u_node = paths.velocity_nodes[node]
        pos_node = paths.position_nodes[node]
        x = u_node - q.v0
        speed = np.linalg.norm(x, axis=1)
        w = sigma_rate(kern.cross_section, speed) * beta_weight(
            kern.mollifier, q.r0 - pos_node
        )
        s1 += paths.ds[node] * float(np.dot(w, speed)) / u_node.shape[0]
        s4 += paths.ds[node] * float(np.dot(w, speed**4)) / u_node.shape[0]
    scale = q.eps ** (-1.0 / nu)
    assert np.isclose(moments.m1, 2.0 * math.pi * theta_integral(1) * s1 * scale,
                      rtol=1e-7)
    assert np.isclose(moments.m4, 2.0 * math.pi * theta_integral(4) * s4 * scale**4,
                      rtol=1e-7)


def test_jump_moments_uniformly_bounded_in_window_width(kern, rng):
    """m₁ and m₄ of the rescaled jump measure stay below explicit
    ε-independent bounds as the window shrinks (the rescaling exactly
    offsets the growing jump intensity)."""
    n_copies = 6
    u = 1.2 * rng.standard_normal((n_copies, 3))
    pos = 0.12 * rng.standard_normal((n_copies, 3))
    v0 = np.array([0.2, -0.1, 0.4])
    x = u - v0
    speed = np.linalg.norm(x, axis=1)
    w = sigma_rate(kern.cross_section, speed) * beta_weight(kern.mollifier, -pos)
    sup1 = float(np.mean(w * speed))
    sup4 = float(np.mean(w * speed**4))
    nu = kern.angular.nu
    b = kern.angular.b_coeff
    bound1 = math.pi * b / (1.0 - nu) * sup1
    bound4 = 2.0 * math.pi * b / (16.0 * (4.0 - nu)) * sup4
    for eps in (0.4, 0.2, 0.1, 0.05, 0.02):
        paths = CopyPaths.constant(u, pos, 0.5 - eps, 0.5)
        q = CharExponentQuery(eps=eps, t=0.5, v0=v0, r0=np.zeros(3),
                              freq=np.zeros(3))
        moments = jump_moments(q, paths, kern)
        assert 0.0 < moments.m1 <= bound1 * (1.0 + 1e-9)
        assert 0.0 < moments.m4 <= bound4 * (1.0 + 1e-9)


def test_simulated_increment_mean_matches_jump_intensity(kern, rng):
    paths = _constant_copies(rng, n_copies=5)
    q = _query([0.0, 0.0, 0.0], eps=0.3)
    floor = 0.03
    n = 40_000
    incs = simulate_small_jump_increments(q, paths, kern, n, floor, seed=31)
    assert incs.shape == (n, 3)

    nu = kern.angular.nu
    b = kern.angular.b_coeff
    cutoff = theta_cutoff(q, nu)
    theta_mean, _ = integrate.quad(
        lambda th: math.sin(th / 2.0) ** 2 * b * th ** (-1.0 - nu), floor, cutoff
    )
    u = paths.velocity_nodes[0]
    pos = paths.position_nodes[0]
    x = u - q.v0
    w = sigma_rate(kern.cross_section, np.linalg.norm(x, axis=1)) * beta_weight(
        kern.mollifier, q.r0 - pos
    )
    expected = (
        float(paths.ds[0]) * 2.0 * math.pi * theta_mean / u.shape[0] * (w @ x)
    )
    se = incs.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(incs.mean(axis=0) - expected) <= 4.0 * se)


def test_increment_sampling_reproducible_and_label_separated(kern, rng):
    paths = _constant_copies(rng)
    q = _query([0.0, 0.0, 0.0], eps=0.3)
    a = simulate_small_jump_increments(q, paths, kern, 200, 0.03, seed=9)
    b = simulate_small_jump_increments(q, paths, kern, 200, 0.03, seed=9)
    c = simulate_small_jump_increments(q, paths, kern, 200, 0.03, seed=9,
                                       labels=("charfn", "other"))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_increments_vanish_below_angle_floor(kern, rng):
    paths = _constant_copies(rng)
    q = _query([0.0, 0.0, 0.0], eps=0.3)
    out = simulate_small_jump_increments(q, paths, kern, 50, theta_floor=0.1,
                                         seed=3)
    assert out.shape == (50, 3)
    assert np.all(out == 0.0)  # cutoff 0.09 sits below the floor


def test_empirical_characteristic_function_matches_exponent(kern, rng):
    """Dual route: compound-Poisson sampling of the truncated small-jump law
    against exp(−ψ) evaluated with the same angle floor."""
    paths = _constant_copies(rng)
    q0 = _query([0.0, 0.0, 0.0], eps=0.3)
    direction = np.array([0.6, -0.48, 0.64])
    grid = [m * direction for m in (0.5, 1.0, 2.0, 4.0)]
    rows = ecf_compare(q0, grid, paths, kern, n_replicates=20_000,
                       theta_floor=0.02, seed=777)
    assert len(rows) == len(grid)
    for kmag, ecf, target, se in rows:
        assert se > 0.0
        assert abs(ecf.real - target.real) <= 3.0 * se
        assert abs(ecf.imag - target.imag) <= 3.0 * se


def test_gradient_bound_finite_with_polynomial_speed_growth(kern, rng):
    """The density-gradient bound must stay finite and grow at most like
    (1+|v₀|)^{4(1+γ)} — the rate the fourth jump moment inherits from the
    relative-speed factor in the collision rate."""
    paths = _constant_copies(rng)
    speeds = (1.0, 2.0, 4.0, 8.0)
    vals = []
    for s in speeds:
        q = _query([0.0, 0.0, 0.0], eps=0.25, v0=(s, 0.0, 0.0))
        val = grad_density_bound(q, paths, kern)
        assert math.isfinite(val) and val > 0.0
        vals.append(val)
    gamma = kern.cross_section.gamma
    slope = math.log(vals[-1] / vals[0]) / math.log(speeds[-1] / speeds[0])
    assert slope <= 4.0 * (1.0 + gamma) + 0.1


def test_gradient_bound_raises_for_degenerate_copies(kern):
    assert issubclass(DivergentIntegralError, RuntimeError)
    v0 = np.array([0.3, -0.2, 0.5])
    paths = CopyPaths.constant(np.tile(v0, (3, 1)), np.zeros((3, 3)), 0.0, 0.25)
    q = _query([0.0, 0.0, 0.0], v0=v0)
    with pytest.raises(DivergentIntegralError, match="coercivity"):
        grad_density_bound(q, paths, kern)
