"""Counter-based random streams.

Every random number in a run is a pure function of (root seed, labels), so
results never depend on how work is partitioned across workers.  The per-pair
collision stream hashes (seed, step, i, j, slot) through a splitmix64 chain;
the compiled scan core reimplements the identical chain in C.  Workflow-level
sampling (initial conditions, Monte Carlo replicates, ...) uses numpy's
counter-based Philox generator keyed by a blake2b-derived sub-seed.
"""

import hashlib

import numpy as np

__all__ = [
    "SLOT_FIRE",
    "SLOT_THETA",
    "SLOT_PHI",
    "SLOT_Z",
    "SLOT_TIME",
    "pair_uniform",
    "pair_uniform_array",
    "derive_seed",
    "substream",
]

# Slot labels for the per-pair collision stream.
SLOT_FIRE = 0
SLOT_THETA = 1
SLOT_PHI = 2
SLOT_Z = 3
SLOT_TIME = 4

_MASK = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(x):
    """One splitmix64 finalizer round on a Python int."""
    x = (x + _GOLD) & _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


def pair_uniform(seed, step, i, j, slot):
    """Uniform in [0, 1) keyed by (seed, step, i, j, slot)."""
    h = _mix(int(seed) & _MASK)
    h = _mix(h ^ (int(step) & _MASK))
    h = _mix(h ^ (int(i) & _MASK))
    h = _mix(h ^ (int(j) & _MASK))
    h = _mix(h ^ (int(slot) & _MASK))
    return (h >> 11) * 2.0**-53


def pair_uniform_array(seed, step, i, j, slot):
    """Vectorized pair_uniform; `i`, `j` are integer arrays (broadcastable).

    Bit-identical to the scalar version and to the compiled core.
    """
    gold = np.uint64(_GOLD)
    m1 = np.uint64(_MIX1)
    m2 = np.uint64(_MIX2)

    def mix(x):
        x = x + gold
        x = (x ^ (x >> np.uint64(30))) * m1
        x = (x ^ (x >> np.uint64(27))) * m2
        return x ^ (x >> np.uint64(31))

    i = np.asarray(i, dtype=np.uint64)
    j = np.asarray(j, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = mix(np.uint64(seed & _MASK))
        h = mix(h ^ np.uint64(step & _MASK))
        h = mix(h ^ i)
        h = mix(h ^ j)
        h = mix(h ^ np.uint64(slot & _MASK))
    return (h >> np.uint64(11)) * 2.0**-53


def derive_seed(seed, *labels):
    """64-bit sub-seed from a root seed and a path of labels."""
    key = (seed & _MASK).to_bytes(8, "little")
    msg = "/".join(str(lab) for lab in labels).encode()
    dig = hashlib.blake2b(msg, digest_size=8, key=key).digest()
    return int.from_bytes(dig, "little")


def substream(seed, *labels):
    """Named counter-based generator (Philox) for workflow-level sampling."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *labels)))
