"""Plain-text key=value run configuration with strict validation.

All workflows share one flat key space; unknown keys are rejected and every
violation is reported at once (with line numbers when parsing from a file).
"""

import math
import warnings
from dataclasses import dataclass, fields, replace

from .besov import AdmissibilityError, admissible_c_interval
from .process import INITIAL_DISTRIBUTIONS, SCHEMES, SimConfig

__all__ = ["WORKFLOWS", "RunConfig", "load_config", "loads_config", "serialize_config"]

WORKFLOWS = ("run", "coupling", "charfn", "besov", "support")

_INT_KEYS = {
    "n_particles", "seed", "snapshot_every", "threads", "n_seeds",
    "sample_size", "n_replicates", "resolution",
}
_FLOAT_KEYS = {
    "t_end", "dt", "nu", "b_coeff", "theta_min", "gamma", "c_sigma", "r_beta",
    "amplitude", "r_scale", "v_scale", "v_offset", "v_jitter", "eval_time",
    "eps", "theta_floor", "hol_alpha", "a_exp", "support_radius", "box_half_width",
}
_LIST_KEYS = {"epsilons", "kappa_mags"}
_STR_KEYS = {"workflow", "scheme", "init", "out_dir"}


@dataclass
class RunConfig:
    """Everything a workflow needs; field names are the config-file keys."""

    workflow: str = "run"
    # simulation
    n_particles: int = 256
    t_end: float = 1.0
    dt: float = 0.01
    seed: int = 1
    scheme: str = "symmetric-pair"
    init: str = "gaussian"
    r_scale: float = 1.0
    v_scale: float = 1.0
    v_offset: float = 2.0
    v_jitter: float = 0.15
    # collision kernel
    nu: float = 0.5
    b_coeff: float = 1.0
    theta_min: float = 0.01
    gamma: float = 1.0
    c_sigma: float = 1.0
    r_beta: float = 0.5
    amplitude: float = 1.0
    # orchestration
    out_dir: str = "out"
    snapshot_every: int = 10
    threads: int = 1
    # analysis windows
    eval_time: float = 0.5
    eps: float = 0.2
    epsilons: tuple = (0.2, 0.1, 0.05, 0.025)
    n_seeds: int = 8
    sample_size: int = 0  # 0 = all particles
    # characteristic-exponent workflow
    kappa_mags: tuple = (1.0, 2.0, 5.0, 10.0)
    n_replicates: int = 20000
    theta_floor: float = 1e-8
    # regularity workflow
    hol_alpha: float = 0.1
    a_exp: float = 0.3
    resolution: int = 48
    box_half_width: float = 5.0
    # support workflow
    support_radius: float = 1.0

    def sim_config(self):
        return SimConfig(
            n_particles=self.n_particles,
            t_end=self.t_end,
            dt=self.dt,
            seed=self.seed,
            nu=self.nu,
            b_coeff=self.b_coeff,
            theta_min=self.theta_min,
            gamma=self.gamma,
            c_sigma=self.c_sigma,
            r_beta=self.r_beta,
            amplitude=self.amplitude,
            init=self.init,
            r_scale=self.r_scale,
            v_scale=self.v_scale,
            v_offset=self.v_offset,
            v_jitter=self.v_jitter,
            scheme=self.scheme,
            snapshot_every=self.snapshot_every,
            threads=self.threads,
        )

    def problems(self):
        """Every validation violation, as human-readable strings."""
        out = []
        if self.workflow not in WORKFLOWS:
            out.append(f"workflow must be one of {WORKFLOWS}, got '{self.workflow}'")
        if not 0.0 < self.nu < 1.0:
            out.append(f"nu must be in (0,1), got {self.nu:g}")
        if not 0.0 < self.gamma < 2.0:
            out.append(f"gamma must be in (0,2), got {self.gamma:g}")
        if not 0.0 < self.theta_min < math.pi:
            out.append(f"theta_min must be in (0,pi), got {self.theta_min:g}")
        if self.c_sigma < 1.0:
            out.append(f"c_sigma must be >= 1, got {self.c_sigma:g}")
        if self.b_coeff <= 0:
            out.append(f"b_coeff must be positive, got {self.b_coeff:g}")
        if self.r_beta <= 0:
            out.append(f"r_beta must be positive, got {self.r_beta:g}")
        if self.amplitude <= 0:
            out.append(f"amplitude must be positive, got {self.amplitude:g}")
        if self.scheme not in SCHEMES:
            out.append(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")
        if self.init not in INITIAL_DISTRIBUTIONS:
            out.append(
                f"init must be one of {INITIAL_DISTRIBUTIONS}, got '{self.init}'"
            )
        if self.n_particles < 2:
            out.append(f"n_particles must be >= 2, got {self.n_particles}")
        if self.dt <= 0:
            out.append(f"dt must be positive, got {self.dt:g}")
        if self.t_end <= 0:
            out.append(f"t_end must be positive, got {self.t_end:g}")
        if self.dt > 0 and self.t_end > 0:
            steps = self.t_end / self.dt
            if abs(steps - round(steps)) > 1e-9:
                out.append(f"t_end={self.t_end:g} is not a multiple of dt={self.dt:g}")
        if self.snapshot_every < 1:
            out.append(f"snapshot_every must be >= 1, got {self.snapshot_every}")
        if self.threads < 1:
            out.append(f"threads must be >= 1, got {self.threads}")
        if not 0 <= self.seed < 2**64:
            out.append("seed must fit in an unsigned 64-bit integer")
        if self.n_seeds < 1:
            out.append(f"n_seeds must be >= 1, got {self.n_seeds}")
        if self.sample_size < 0:
            out.append(f"sample_size must be >= 0, got {self.sample_size}")
        if self.n_replicates < 1:
            out.append(f"n_replicates must be >= 1, got {self.n_replicates}")
        if self.theta_floor <= 0:
            out.append(f"theta_floor must be positive, got {self.theta_floor:g}")
        if not 0 < self.eval_time <= self.t_end:
            out.append(
                f"eval_time must be in (0, t_end], got {self.eval_time:g} "
                f"with t_end={self.t_end:g}"
            )
        if not 0.0 < self.eps < 1.0:
            out.append(f"eps must be in (0,1), got {self.eps:g}")
        elif self.eps >= self.eval_time:
            out.append(
                f"eps must be < eval_time, got eps={self.eps:g}, "
                f"eval_time={self.eval_time:g}"
            )
        if any(e <= 0 for e in self.epsilons):
            out.append(f"epsilons must all be positive, got {self.epsilons}")
        elif self.workflow == "coupling" and max(self.epsilons) >= self.eval_time:
            out.append(
                f"epsilons must all be < eval_time, got max {max(self.epsilons):g} "
                f"with eval_time={self.eval_time:g}"
            )
        if not 0.0 < self.hol_alpha < self.a_exp < 1.0:
            out.append(
                f"need 0 < hol_alpha < a_exp < 1, got hol_alpha="
                f"{self.hol_alpha:g}, a_exp={self.a_exp:g}"
            )
        if self.resolution < 4:
            out.append(f"resolution must be >= 4, got {self.resolution}")
        if self.box_half_width <= 0:
            out.append(f"box_half_width must be positive, got {self.box_half_width:g}")
        if self.support_radius <= 0:
            out.append(f"support_radius must be positive, got {self.support_radius:g}")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid configuration: " + "; ".join(problems))
        if self.workflow == "besov":
            try:
                admissible_c_interval(self.gamma, self.nu)
            except AdmissibilityError as exc:
                warnings.warn(str(exc), UserWarning, stacklevel=2)
        return self


_ALL_KEYS = {f.name for f in fields(RunConfig)}


def _parse_value(key, raw, lineno, errors):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _LIST_KEYS:
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        return raw
    except ValueError:
        kind = "integer" if key in _INT_KEYS else (
            "comma-separated floats" if key in _LIST_KEYS else "number"
        )
        errors.append(f"line {lineno}: cannot parse '{raw}' as {kind} for key '{key}'")
        return None


def loads_config(text, source="<string>"):
    """Parse key=value text into a validated RunConfig.

    All parse errors, unknown keys, and range violations are collected and
    reported together.
    """
    errors = []
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected key=value, got '{stripped}'")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _ALL_KEYS:
            errors.append(f"line {lineno}: unknown key '{key}'")
            continue
        parsed = _parse_value(key, raw, lineno, errors)
        if parsed is not None:
            values[key] = parsed
    cfg = replace(RunConfig(), **values)
    errors.extend(cfg.problems())
    if errors:
        raise ValueError(f"invalid configuration ({source}): " + "; ".join(errors))
    return cfg.validate()


def load_config(path):
    with open(path) as f:
        return loads_config(f.read(), source=str(path))


def _format_value(key, value):
    if key in _LIST_KEYS:
        return ",".join("%.17g" % v for v in value)
    if key in _FLOAT_KEYS:
        return "%.17g" % value
    return str(value)


def serialize_config(cfg):
    """Render a RunConfig as key=value text; load(serialize(c)) == c."""
    lines = [
        f"{f.name}={_format_value(f.name, getattr(cfg, f.name))}"
        for f in fields(RunConfig)
    ]
    return "\n".join(lines) + "\n"
