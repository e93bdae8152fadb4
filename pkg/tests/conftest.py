"""Shared fixtures: a small collision kernel and a fast simulation config."""

import numpy as np
import pytest

from enskog.kernel import CollisionKernel
from enskog.process import SimConfig


@pytest.fixture
def kern():
    """Kernel with the documented default parameters (nu=0.5, gamma=1)."""
    return CollisionKernel.from_params(
        nu=0.5, b_coeff=1.0, theta_min=0.01, gamma=1.0, c_sigma=1.0,
        r_beta=0.5, amplitude=1.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)


def tiny_config(**overrides):
    """Small, fast SimConfig for trajectory-level tests."""
    base = dict(
        n_particles=64, t_end=0.2, dt=0.01, seed=7,
        nu=0.5, b_coeff=1.0, theta_min=0.01, gamma=1.0, c_sigma=1.0,
        r_beta=0.5, amplitude=1.0,
        init="gaussian", r_scale=0.3, v_scale=1.0,
        scheme="symmetric-pair", snapshot_every=5,
    )
    base.update(overrides)
    return SimConfig(**base)
