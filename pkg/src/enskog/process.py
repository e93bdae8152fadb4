"""Interacting N-particle system: free streaming plus thinned collision events.

A step freezes pair rates at the step start, proposes events by per-pair
thinning (fire probability 1−exp(−λ·dt)), orders accepted events by time, and
applies them with exact free streaming in between.  Two update schemes:

* ``symmetric-pair``: unordered pairs, both partners updated — exact pathwise
  momentum/energy conservation.
* ``one-sided``: ordered pairs, only particle i updated — matches the
  single-particle jump dynamics in law.

The event log stores everything needed to (a) replay a run bit-for-bit
without rescanning and (b) build the coefficient-frozen approximation of the
tracked velocity over a window (t−ε, t]: the thinning variate z is re-tested
against the frozen rate and the azimuth is re-aligned by the Tanaka shift.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import backend
from .kernel import CollisionKernel, beta_weight, sigma_rate
from .rng import substream
from .vecgeom import deflection, mirror_azimuth, post_collision, tanaka_shift

__all__ = [
    "SCHEMES",
    "INITIAL_DISTRIBUTIONS",
    "RateBoundWarning",
    "SimulationDivergedError",
    "ParticleState",
    "Ensemble",
    "CollisionEvent",
    "EventLog",
    "SimConfig",
    "StepStream",
    "initial_ensemble",
    "step",
    "run",
    "replay",
    "frozen_deltas",
    "frozen_copy",
    "EmpiricalMeasure",
    "empirical_measure",
    "write_snapshots_csv",
    "read_snapshots_csv",
    "SNAPSHOT_HEADER",
    "EVENT_HEADER",
]

SNAPSHOT_HEADER = "t,particle_id,rx,ry,rz,vx,vy,vz"
EVENT_HEADER = "time,i,j,theta,phi,z"
SCHEMES = ("symmetric-pair", "one-sided")
INITIAL_DISTRIBUTIONS = ("gaussian", "ball", "two_cluster")


class RateBoundWarning(UserWarning):
    """max pair rate × dt exceeded the thinning guideline 0.1."""


class SimulationDivergedError(RuntimeError):
    """Non-finite state encountered; the run is aborted."""


@dataclass
class ParticleState:
    r: np.ndarray
    v: np.ndarray


class Ensemble:
    """N equally weighted particles (positions, velocities) at time t."""

    def __init__(self, positions, velocities, t=0.0):
        self.positions = np.array(positions, dtype=np.float64)
        self.velocities = np.array(velocities, dtype=np.float64)
        self.t = float(t)
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 2:
            raise ValueError("positions and velocities must both be (N,3)")
        if self.positions.shape[0] < 2 or self.positions.shape[1] != 3:
            raise ValueError("need at least 2 particles in 3 dimensions")
        if not (np.isfinite(self.positions).all() and np.isfinite(self.velocities).all()):
            raise ValueError("non-finite particle state")

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def weight(self):
        return 1.0 / self.n

    @property
    def particles(self):
        return [ParticleState(self.positions[k], self.velocities[k]) for k in range(self.n)]

    def particle(self, k):
        return ParticleState(self.positions[k], self.velocities[k])

    def copy(self):
        return Ensemble(self.positions, self.velocities, self.t)


@dataclass
class CollisionEvent:
    time: float
    i: int
    j: int
    theta: float
    phi: float
    z_uniform: float


class EventLog:
    """Append-only record of accepted events plus per-step rate bookkeeping.

    Beyond the CSV columns written to disk it keeps, per event, the owning
    step index and the proposal weight σβ evaluated at the step start — the
    two pieces needed for bit-for-bit replay and for the frozen-rate re-test.
    """

    _COLS = ("time", "i", "j", "theta", "phi", "z", "step", "weight")

    def __init__(self):
        self._chunks = []
        self._cache = None
        self.max_rate_dt = []  # one (step, max pair rate × dt) entry per step

    def note_rate(self, step_index, max_rate_dt):
        self.max_rate_dt.append((int(step_index), float(max_rate_dt)))

    def append_step(self, step_index, batch, weights):
        if len(batch) == 0:
            return
        self._chunks.append(
            (
                batch.time,
                batch.i,
                batch.j,
                batch.theta,
                batch.phi,
                batch.z,
                np.full(len(batch), step_index, dtype=np.int64),
                np.asarray(weights, dtype=np.float64),
            )
        )
        self._cache = None

    def _arrays(self):
        if self._cache is None:
            if self._chunks:
                self._cache = {
                    name: np.concatenate([c[k] for c in self._chunks])
                    for k, name in enumerate(self._COLS)
                }
            else:
                self._cache = {
                    name: np.empty(0, np.int64 if name in ("i", "j", "step") else np.float64)
                    for name in self._COLS
                }
        return self._cache

    def __len__(self):
        return self._arrays()["time"].size

    def column(self, name):
        return self._arrays()[name]

    @property
    def events(self):
        a = self._arrays()
        return [
            CollisionEvent(a["time"][k], int(a["i"][k]), int(a["j"][k]),
                           a["theta"][k], a["phi"][k], a["z"][k])
            for k in range(len(self))
        ]

    def window(self, t_lo, t_hi):
        """Arrays of events with time in (t_lo, t_hi], in time order."""
        a = self._arrays()
        lo = np.searchsorted(a["time"], t_lo, side="right")
        hi = np.searchsorted(a["time"], t_hi, side="right")
        return {name: a[name][lo:hi] for name in self._COLS}

    def step_slice(self, step_index):
        a = self._arrays()
        lo = np.searchsorted(a["step"], step_index, side="left")
        hi = np.searchsorted(a["step"], step_index, side="right")
        return {name: a[name][lo:hi] for name in self._COLS}

    def write_csv(self, path):
        a = self._arrays()
        with open(path, "w") as f:
            f.write(EVENT_HEADER + "\n")
            for k in range(len(self)):
                f.write(
                    "%.17g,%d,%d,%.17g,%.17g,%.17g\n"
                    % (a["time"][k], a["i"][k], a["j"][k],
                       a["theta"][k], a["phi"][k], a["z"][k])
                )

    @classmethod
    def read_csv(cls, path, dt=None):
        """Load the CSV columns; step indices are reconstructed from dt when
        given (proposal weights are filled in by replay())."""
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        log = cls()
        if raw.size == 0:
            return log
        step = (
            np.floor(raw[:, 0] / dt + 1e-12).astype(np.int64)
            if dt
            else np.full(raw.shape[0], -1, np.int64)
        )
        log._chunks.append(
            (
                raw[:, 0],
                raw[:, 1].astype(np.int64),
                raw[:, 2].astype(np.int64),
                raw[:, 3],
                raw[:, 4],
                raw[:, 5],
                step,
                np.full(raw.shape[0], np.nan),
            )
        )
        return log


@dataclass(frozen=True)
class StepStream:
    """Counter-based stream handle for one step: (root seed, step index)."""

    seed: int
    step_index: int


@dataclass
class SimConfig:
    """Simulation parameters; kernel fields mirror the config-file keys."""

    n_particles: int = 256
    t_end: float = 1.0
    dt: float = 0.01
    seed: int = 1
    nu: float = 0.5
    b_coeff: float = 1.0
    theta_min: float = 0.01
    gamma: float = 1.0
    c_sigma: float = 1.0
    r_beta: float = 0.5
    amplitude: float = 1.0
    init: str = "gaussian"
    r_scale: float = 1.0
    v_scale: float = 1.0
    v_offset: float = 2.0
    v_jitter: float = 0.15
    scheme: str = "symmetric-pair"
    snapshot_every: int = 10
    threads: int = 1

    def kernel(self):
        return CollisionKernel.from_params(
            self.nu, self.b_coeff, self.theta_min, self.gamma,
            self.c_sigma, self.r_beta, self.amplitude,
        )

    def n_steps(self):
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return int(round(steps))

    def validate(self):
        problems = []
        if self.n_particles < 2:
            problems.append("n_particles must be >= 2")
        if self.dt <= 0.0:
            problems.append("dt must be positive")
        if self.t_end <= 0.0:
            problems.append("t_end must be positive")
        if self.scheme not in SCHEMES:
            problems.append(f"scheme must be one of {SCHEMES}")
        if self.init not in INITIAL_DISTRIBUTIONS:
            problems.append(f"init must be one of {INITIAL_DISTRIBUTIONS}")
        if self.snapshot_every < 1:
            problems.append("snapshot_every must be >= 1")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must fit in an unsigned 64-bit integer")
        try:
            self.kernel()
        except ValueError as exc:
            problems.append(str(exc))
        if self.dt > 0 < self.t_end:
            try:
                self.n_steps()
            except ValueError as exc:
                problems.append(str(exc))
        if problems:
            raise ValueError("; ".join(problems))


def initial_ensemble(config):
    """Sample the configured initial law with the run's named init stream."""
    g = substream(config.seed, "init", config.init)
    n = config.n_particles
    positions = config.r_scale * g.standard_normal((n, 3))
    if config.init == "gaussian":
        velocities = config.v_scale * g.standard_normal((n, 3))
    elif config.init == "ball":
        direction = g.standard_normal((n, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = config.v_scale * g.random(n) ** (1.0 / 3.0)
        velocities = direction * radius[:, None]
    elif config.init == "two_cluster":
        sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        velocities = np.zeros((n, 3))
        velocities[:, 0] = sign * config.v_offset
        velocities += config.v_jitter * g.standard_normal((n, 3))
    else:
        raise ValueError(f"unknown init '{config.init}'")
    return Ensemble(positions, velocities, 0.0)


def _proposal_weights(R, V, batch, kern):
    """σβ per event, from step-start states (the thinning reference weight)."""
    if len(batch) == 0:
        return np.empty(0)
    dr = R[batch.i] - R[batch.j]
    dv = V[batch.i] - V[batch.j]
    speed = np.sqrt(np.einsum("ij,ij->i", dv, dv))
    return sigma_rate(kern.cross_section, speed) * beta_weight(kern.mollifier, dr)


def _apply_events(R, V, batch, t0, dt, scheme):
    """Stream and collide in event-time order, then finish the step.

    Mutates R, V in place; the exact same code path serves run() and replay()
    so replays are bit-for-bit.
    """
    symmetric = scheme == "symmetric-pair"
    tau = {}
    for k in range(len(batch.time)):
        s = batch.time[k]
        i = int(batch.i[k])
        j = int(batch.j[k])
        for p in (i, j):
            R[p] += V[p] * (s - tau.get(p, t0))
            tau[p] = s
        if symmetric:
            vi, vj = post_collision(V[i], V[j], batch.theta[k], batch.phi[k])
            V[i] = vi
            V[j] = vj
        else:
            V[i] = V[i] + deflection(V[i], V[j], batch.theta[k], batch.phi[k])
    R += V * dt
    for p, tp in tau.items():
        R[p] += V[p] * (t0 - tp)


def _scan(R, V, kern, config, step_index, t0):
    batch = backend.scan_step(
        R, V, kern, config.dt, config.seed, step_index, config.scheme, t0,
        threads=config.threads,
    )
    if batch.max_rate_dt > 0.1:
        warnings.warn(
            f"max pair rate × dt = {batch.max_rate_dt:.3g} exceeds 0.1 at step "
            f"{step_index}; thinning error is O((λ·dt)²)",
            RateBoundWarning,
            stacklevel=3,
        )
    return batch

def step(e, dt, rng, kern, scheme="symmetric-pair", threads=1):
    """One thinning step from ensemble `e`; returns (new ensemble, events).

    `rng` is a StepStream (root seed + step index) so the proposal stream is a
    pure function of (seed, step, pair) and never of the worker layout.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    R = e.positions.copy()
    V = e.velocities.copy()
    batch = backend.scan_step(
        R, V, kern, dt, rng.seed, rng.step_index, scheme, e.t, threads=threads
    )
    if batch.max_rate_dt > 0.1:
        warnings.warn(
            f"max pair rate × dt = {batch.max_rate_dt:.3g} exceeds 0.1",
            RateBoundWarning,
            stacklevel=2,
        )
    _apply_events(R, V, batch, e.t, dt, scheme)
    events = [
        CollisionEvent(batch.time[k], int(batch.i[k]), int(batch.j[k]),
                       batch.theta[k], batch.phi[k], batch.z[k])
        for k in range(len(batch))
    ]
    return Ensemble(R, V, e.t + dt), events


def run(config):
    """Simulate the configured system; returns (snapshots, event log).

    Deterministic given config.seed; snapshots at every `snapshot_every`-th
    step plus t=0 and t_end.
    """
    config.validate()
    kern = config.kernel()
    ens0 = initial_ensemble(config)
    R = ens0.positions
    V = ens0.velocities
    n_steps = config.n_steps()
    log = EventLog()
    snaps = [Ensemble(R, V, 0.0)]
    for k in range(n_steps):
        t0 = k * config.dt
        batch = _scan(R, V, kern, config, k, t0)
        log.note_rate(k, batch.max_rate_dt)
        if len(batch):
            weights = _proposal_weights(R, V, batch, kern)
            log.append_step(k, batch, weights)
        _apply_events(R, V, batch, t0, config.dt, config.scheme)
        if len(batch):
            touched = np.unique(np.concatenate([batch.i, batch.j]))
            if not np.isfinite(V[touched]).all():
                raise SimulationDivergedError(f"non-finite velocity at step {k}")
        if (k + 1) % config.snapshot_every == 0 or k + 1 == n_steps:
            snaps.append(Ensemble(R, V, (k + 1) * config.dt))
    if not (np.isfinite(R).all() and np.isfinite(V).all()):
        raise SimulationDivergedError("non-finite state at end of run")
    return snaps, log


def replay(config, log):
    """Re-run from the logged events only (no rescanning); returns snapshots.

    Uses the same application code path as run(), so states match the original
    bit-for-bit.  Requires the log's step indices (native logs have them; CSV
    loads reconstruct them from dt).
    """
    config.validate()
    ens0 = initial_ensemble(config)
    R = ens0.positions
    V = ens0.velocities
    n_steps = config.n_steps()
    snaps = [Ensemble(R, V, 0.0)]
    for k in range(n_steps):
        t0 = k * config.dt
        sl = log.step_slice(k)
        batch = backend.EventBatch(
            sl["time"], sl["i"], sl["j"], sl["theta"], sl["phi"], sl["z"], 0.0
        )
        _apply_events(R, V, batch, t0, config.dt, config.scheme)
        if (k + 1) % config.snapshot_every == 0 or k + 1 == n_steps:
            snaps.append(Ensemble(R, V, (k + 1) * config.dt))
    return snaps


def frozen_deltas(e_prev, window, kern, scheme):
    """Replay a window, tracking every particle's frozen-coefficient velocity.

    `e_prev` is the snapshot at the window start t−ε; `window` is the event
    log restricted to (t−ε, t].  Returns (v_true, v_frozen): the true terminal
    velocities and the approximations built by replaying the same events with
    coefficients frozen at t−ε — deflection evaluated at the frozen velocity,
    azimuth shifted by the Tanaka alignment, and the thinning variate re-tested
    against the frozen rate (z·σβ_proposal ≤ σβ_frozen).
    """
    symmetric = scheme == "symmetric-pair"
    R = e_prev.positions.copy()
    V = e_prev.velocities.copy()
    r0 = e_prev.positions
    v0 = e_prev.velocities
    v_frozen = e_prev.velocities.copy()
    cs, mol = kern.cross_section, kern.mollifier
    tau = {}
    t_prev = e_prev.t
    n_ev = window["time"].size
    for k in range(n_ev):
        s = window["time"][k]
        i = int(window["i"][k])
        j = int(window["j"][k])
        theta = window["theta"][k]
        phi = window["phi"][k]
        z_abs = window["z"][k] * window["weight"][k]
        for p in (i, j):
            R[p] += V[p] * (s - tau.get(p, t_prev))
            tau[p] = s
        sides = [(i, j, phi)]
        if symmetric:
            sides.append((j, i, float(mirror_azimuth(phi))))
        contribs = []
        for tr, pa, phi_eff in sides:
            u_s = V[pa]
            dv0 = v0[tr] - u_s
            w_frozen = float(
                sigma_rate(cs, math.sqrt(float(np.dot(dv0, dv0))))
                * beta_weight(mol, r0[tr] - R[pa])
            )
            if z_abs <= w_frozen:
                shift = float(tanaka_shift(V[tr], u_s, v0[tr], u_s))
                contribs.append((tr, deflection(v0[tr], u_s, theta, phi_eff + shift)))
        if symmetric:
            vi, vj = post_collision(V[i], V[j], theta, phi)
            V[i] = vi
            V[j] = vj
        else:
            V[i] = V[i] + deflection(V[i], V[j], theta, phi)
        for tr, d in contribs:
            v_frozen[tr] = v_frozen[tr] + d
    return V, v_frozen


def frozen_copy(e_prev, window, tracked, kern, scheme="one-sided"):
    """Frozen-coefficient terminal velocity of one tracked particle."""
    _, v_frozen = frozen_deltas(e_prev, window, kern, scheme)
    return v_frozen[int(tracked)]


@dataclass
class EmpiricalMeasure:
    """Equal-weight sample measure over (r, v); integrates test functions."""

    positions: np.ndarray
    velocities: np.ndarray
    weight: float

    def integrate(self, f):
        vals = np.asarray(f(self.positions, self.velocities), dtype=np.float64)
        return vals.mean(axis=0)


def empirical_measure(e):
    return EmpiricalMeasure(e.positions.copy(), e.velocities.copy(), e.weight)


def write_snapshots_csv(path, snapshots):
    fmt = ["%.17g", "%d"] + ["%.17g"] * 6
    with open(path, "w") as f:
        f.write(SNAPSHOT_HEADER + "\n")
        for e in snapshots:
            block = np.column_stack(
                [np.full(e.n, e.t), np.arange(e.n), e.positions, e.velocities]
            )
            np.savetxt(f, block, fmt=fmt, delimiter=",")


def read_snapshots_csv(path):
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    snaps = []
    if raw.size == 0:
        return snaps
    times = raw[:, 0]
    bounds = np.concatenate(([0], np.where(np.diff(times) != 0)[0] + 1, [len(times)]))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        block = raw[lo:hi]
        snaps.append(Ensemble(block[:, 2:5], block[:, 5:8], t=block[0, 0]))
    return snaps
