"""Acceptance gate: ten end-to-end criteria with pinned tolerances.

Each test asserts the quantitative criterion and its wall-clock budget.
All reference values are recomputed at test time — closed forms, scipy
quadrature, or an independently coded Monte Carlo route; nothing is compared
against stored outputs.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from enskog import cli
from enskog.besov import AdmissibilityError, admissible_c_interval, besov_estimate
from enskog.charfn import CharExponentQuery, CopyPaths, ecf_compare, lower_bound_check
from enskog.kernel import sample_theta, sigma_rate
from enskog.observables import (
    ConeSet,
    cone_mass,
    conserved_quantities,
    coupling_error,
    fit_growth_slope,
    moment,
    snapshot_at,
    sphere_grid_26,
    standard_test_bank,
    support_coverage,
    weak_form_residual,
)
from enskog.process import SimConfig, run
from enskog.rng import substream
from enskog.vecgeom import deflection, tanaka_shift


def _config(**overrides):
    base = dict(
        n_particles=256,
        t_end=0.2,
        dt=0.01,
        seed=1,
        nu=0.5,
        b_coeff=1.0,
        theta_min=0.01,
        gamma=1.0,
        c_sigma=1.0,
        r_beta=0.5,
        amplitude=1.0,
        init="gaussian",
        r_scale=1.0,
        v_scale=1.0,
        scheme="symmetric-pair",
        snapshot_every=10,
    )
    base.update(overrides)
    return SimConfig(**base)


def test_acceptance_01_collision_conservation():
    """Symmetric-pair scheme, N = 1000, 10⁴ steps: total momentum exact to
    rounding, relative kinetic-energy drift below 1e-10."""
    start = time.monotonic()
    cfg = _config(
        n_particles=1000,
        t_end=10.0,
        dt=1e-3,
        seed=101,
        amplitude=3.0,
        r_scale=2.0,
        snapshot_every=2000,
    )
    assert cfg.n_steps() == 10_000
    snaps, log = run(cfg)
    _, p0, e0 = conserved_quantities(snaps[0])
    _, p1, e1 = conserved_quantities(snaps[-1])
    assert len(log) > 200  # the run must actually collide
    assert np.max(np.abs(p1 - p0)) <= 1e-12
    assert abs(e1 - e0) / e0 < 1e-10
    assert time.monotonic() - start <= 120.0


def test_acceptance_02_deflection_and_alignment_bounds():
    """Zero violations of |d| ≤ ½θ|v−u| and of the azimuth-aligned
    comparison |d − d⋆| ≤ 2θ(|v−u| + |v⋆−u⋆|) over 10⁵ random tuples."""
    start = time.monotonic()
    g = np.random.default_rng(202)
    n = 100_000
    v = 2.0 * g.standard_normal((n, 3))
    u = 2.0 * g.standard_normal((n, 3))
    v_star = v + 0.5 * g.standard_normal((n, 3))
    u_star = u + 0.5 * g.standard_normal((n, 3))
    theta = g.uniform(1e-6, math.pi, n)
    phi = g.uniform(0.0, 2.0 * math.pi, n)

    d = deflection(v, u, theta, phi)
    rel = np.linalg.norm(u - v, axis=1)
    assert int((np.linalg.norm(d, axis=1) > 0.5 * theta * rel).sum()) == 0

    xi0 = tanaka_shift(v, u, v_star, u_star)
    d_star = deflection(v_star, u_star, theta, phi + xi0)
    gap = np.linalg.norm(d - d_star, axis=1)
    rel_star = np.linalg.norm(u_star - v_star, axis=1)
    assert int((gap > 2.0 * theta * (rel + rel_star)).sum()) == 0
    assert time.monotonic() - start <= 60.0


@pytest.mark.parametrize("nu", [0.3, 0.5, 0.8])
def test_acceptance_03_angular_sampler_ks(nu):
    """KS test of 10⁵ inverse-CDF draws against the analytic truncated
    power-law CDF, level 0.01."""
    start = time.monotonic()
    cfg = _config(nu=nu)
    am = cfg.kernel().angular
    lo, hi = am.theta_min, math.pi
    denom = lo**-nu - hi**-nu

    def cdf(t):
        return (lo**-nu - np.asarray(t, dtype=np.float64) ** -nu) / denom

    g = substream(303, "acceptance-ks", f"nu={nu}")
    draws = sample_theta(am, g.random(100_000))
    result = stats.kstest(draws, cdf)
    assert result.pvalue > 0.01
    assert time.monotonic() - start <= 60.0


@pytest.mark.parametrize("gamma", [0.5, 1.0])
def test_acceptance_04_coupling_rate(gamma):
    """Frozen-coefficient coupling error over ε ∈ {0.2, 0.1, 0.05, 0.025},
    N = 10⁴, 32 seeds: fitted log-log slope ≥ 1.0."""
    start = time.monotonic()
    epsilons = (0.2, 0.1, 0.05, 0.025)
    trajs, logs = [], []
    cfg = None
    for k in range(32):
        cfg = _config(
            n_particles=10_000,
            t_end=0.25,
            dt=0.025,
            seed=4000 + k,
            gamma=gamma,
            amplitude=4.0,
            snapshot_every=1,
        )
        snaps, log = run(cfg)
        trajs.append(snaps)
        logs.append(log)
    rows, slope = coupling_error(trajs, logs, cfg, epsilons, t_eval=0.25)
    assert all(m > 0 for _, m, _ in rows)
    assert slope >= 1.0
    assert time.monotonic() - start <= 450.0  # ≤ 15 min across both gammas


@pytest.mark.parametrize("gamma", [0.5, 1.0])
def test_acceptance_05_moment_growth(gamma):
    """p-th moments stay finite over T = 2 and grow no faster than
    t^{2p/(2−γ) + 0.5}."""
    start = time.monotonic()
    cfg = _config(
        n_particles=2000,
        t_end=2.0,
        dt=0.01,
        seed=55,
        gamma=gamma,
        snapshot_every=5,
    )
    snaps, _ = run(cfg)
    times = [e.t for e in snaps]
    for p in (4, 6):
        series = [moment(e, p) for e in snaps]
        assert all(math.isfinite(x) for x in series)
        slope = fit_growth_slope(times, series)
        assert slope <= 2.0 * p / (2.0 - gamma) + 0.5
    assert time.monotonic() - start <= 300.0  # ≤ 10 min across both gammas


def test_acceptance_06_full_velocity_support():
    """Two-cluster start, N = 10⁵, t₀ = 0.5: every ball B(x, 1) centered on
    the 26-point sphere grid S(0, 2) carries mass, and so does every cone in
    a 3×3 (u, ξ) grid."""
    start = time.monotonic()
    cfg = _config(
        n_particles=100_000,
        t_end=0.5,
        dt=0.02,
        seed=606,
        init="two_cluster",
        v_offset=2.0,
        r_scale=1.0,
        amplitude=2.0,
        snapshot_every=25,
    )
    snaps, _ = run(cfg)
    final = snapshot_at(snaps, 0.5)

    masses = support_coverage(final, sphere_grid_26(2.0), 1.0)
    assert masses.shape == (26,)
    assert float(masses.min()) > 0.0

    kern = cfg.kernel()
    m_floor = 0.5 * float(sigma_rate(kern.cross_section, 1.0))
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    diag = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
    for u_ref in (np.zeros(3), 0.5 * e1, -0.5 * e1):
        for xi in (e1, e2, diag):
            cone = ConeSet(u=u_ref, xi=xi, m=m_floor,
                           cross_section=kern.cross_section)
            assert cone_mass(final, cone) > 0.0
    assert time.monotonic() - start <= 300.0


def test_acceptance_07_characteristic_exponent():
    """(a) Empirical characteristic function of simulated small-jump
    increments matches exp(−ψ) within 3 SE on a 5-point frequency grid;
    (b) the fitted coercivity constant over |κ| ∈ {1, 2, 5, 10} is > 0."""
    start = time.monotonic()
    cfg = _config(n_particles=1000, t_end=0.5, seed=707, snapshot_every=1)
    snaps, _ = run(cfg)
    kern = cfg.kernel()
    eps, t_eval = 0.2, 0.5
    copies = CopyPaths.from_trajectory(snaps, t_eval - eps, t_eval)
    base = snapshot_at(snaps, t_eval - eps)
    q0 = CharExponentQuery(
        eps=eps, t=t_eval, v0=base.velocities[0], r0=base.positions[0],
        freq=np.zeros(3),
    )
    direction = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)

    rows = ecf_compare(
        q0,
        [m * direction for m in (0.5, 1.0, 2.0, 4.0, 8.0)],
        copies,
        kern,
        n_replicates=50_000,
        theta_floor=cfg.theta_min,
        seed=714,
    )
    assert len(rows) == 5
    for _, ecf, target, se in rows:
        assert se > 0.0
        assert abs(ecf.real - target.real) <= 3.0 * se
        assert abs(ecf.imag - target.imag) <= 3.0 * se

    report = lower_bound_check(
        q0, [m * direction for m in (1.0, 2.0, 5.0, 10.0)], copies, kern
    )
    assert report.passed
    assert report.c > 0.0
    assert time.monotonic() - start <= 300.0


def test_acceptance_08_weak_form_residuals():
    """Centered-difference residuals of d/dt⟨ψ⟩ = ⟨generator ψ⟩ within 3
    Monte Carlo SE of 0 for the five-function bank; halving the forward
    differencing step halves the deterministic part of the residual."""
    start = time.monotonic()
    bank = standard_test_bank()
    # Counter-streaming clusters relax hard through collisions, so the bank
    # averages carry real curvature in t and the first-order forward bias is
    # visible above the Monte Carlo noise floor.
    t_eval, delta = 0.10, 0.04
    cent = {fn.id: [] for fn in bank}
    fwd = {fn.id: [] for fn in bank}
    fwd_half = {fn.id: [] for fn in bank}
    for k in range(32):
        cfg = _config(
            n_particles=500,
            t_end=0.2,
            dt=0.005,
            seed=8000 + k,
            init="two_cluster",
            v_offset=2.0,
            amplitude=2.0,
            r_scale=0.5,
            snapshot_every=1,
        )
        snaps, _ = run(cfg)
        kern = cfg.kernel()
        rc = weak_form_residual(snaps, kern, bank, t_eval, delta=0.02,
                                mode="centered")
        means = {
            t: {fn.id: float(fn.value(e.positions, e.velocities).mean())
                for fn in bank}
            for t, e in ((s, snapshot_at(snaps, t_eval + s))
                         for s in (0.0, delta / 2.0, delta))
        }
        for fid in cent:
            gen = rc[fid][2]  # same ensemble for every probe spacing
            cent[fid].append(rc[fid][0])
            fwd[fid].append((means[delta][fid] - means[0.0][fid]) / delta - gen)
            fwd_half[fid].append(
                (means[delta / 2.0][fid] - means[0.0][fid]) / (delta / 2.0) - gen
            )

    def mean_se(values):
        arr = np.asarray(values)
        return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))

    for fid in cent:
        m, se = mean_se(cent[fid])
        assert abs(m) <= 3.0 * se + 1e-14  # const is exactly zero both sides

    measurable = []
    for fid in fwd:
        d_mean, d_se = mean_se(fwd[fid])
        if abs(d_mean) > 5.0 * d_se and d_se > 0.0:
            measurable.append(fid)
            paired = np.asarray(fwd_half[fid]) - 0.5 * np.asarray(fwd[fid])
            pm, pse = mean_se(paired)
            assert abs(pm) <= 3.0 * pse
    assert measurable  # at least one member must show a deterministic part
    assert time.monotonic() - start <= 600.0


def test_acceptance_09_regularity_estimate():
    """kappa_hat finite and stable within ±20% when the sample doubles from
    10⁵ to 2·10⁵ (γ = 1, ν = 0.9); empty (γ, ν) windows raise an error
    naming the admissibility constraint."""
    start = time.monotonic()
    cfg = _config(
        n_particles=200_000,
        t_end=0.25,
        dt=0.05,
        seed=909,
        nu=0.9,
        r_scale=3.0,
        amplitude=0.5,
        snapshot_every=5,
    )
    snaps, _ = run(cfg)
    sample = snapshot_at(snaps, 0.25).velocities
    k_full, rows = besov_estimate(sample, 0.1, 0.3, gamma=1.0, nu=0.9)
    k_half, _ = besov_estimate(sample[:100_000], 0.1, 0.3, gamma=1.0, nu=0.9)
    assert math.isfinite(k_full) and k_full > 0.0
    assert math.isfinite(k_half) and k_half > 0.0
    assert abs(k_full - k_half) <= 0.2 * k_half
    assert all(math.isfinite(r.ratio) for r in rows)

    with pytest.raises(AdmissibilityError) as err:
        admissible_c_interval(1.0, 0.5)
    msg = str(err.value)
    assert "(gamma+1)/(2*gamma+1)" in msg and "nu" in msg
    assert "gamma=1" in msg and "nu=0.5" in msg
    assert time.monotonic() - start <= 600.0


def test_acceptance_10_reproducible_manifests(tmp_path):
    """Identical seeds produce identical checksums across 1-, 2-, and
    8-worker runs, and across repeat runs."""
    start = time.monotonic()
    cfg_file = tmp_path / "repro.cfg"
    cfg_file.write_text(
        "workflow=run\nn_particles=256\nt_end=0.2\ndt=0.01\nseed=42\n"
        "snapshot_every=5\namplitude=0.5\nr_scale=0.7\neval_time=0.2\n"
        "eps=0.1\nepsilons=0.1,0.05\n"
    )
    manifests = {}
    for threads in (1, 2, 8):
        out = tmp_path / f"w{threads}"
        rc = cli.main(
            ["run", "--config", str(cfg_file), "--out", str(out),
             "--threads", str(threads)]
        )
        assert rc == 0
        manifests[threads] = json.loads((out / "manifest.json").read_text())

    sums = [m["checksums"] for m in manifests.values()]
    assert sums[0] == sums[1] == sums[2]
    for key in ("version", "backend", "seed", "workflow"):
        assert len({json.dumps(m[key]) for m in manifests.values()}) == 1

    out = tmp_path / "again"
    assert cli.main(["run", "--config", str(cfg_file), "--out", str(out)]) == 0
    again = json.loads((out / "manifest.json").read_text())
    assert again["checksums"] == sums[0]
    assert time.monotonic() - start <= 300.0
