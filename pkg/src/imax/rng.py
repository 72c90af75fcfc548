"""Counter-based random numbers.

Every draw is a pure function of ``(stream key, run index, draw index)``, so
simulations can be split across threads in any order and still produce the
same numbers.  Stream keys are derived from the user seed plus a domain tag
and a couple of integers (node id, iteration, ...), which keeps the streams
of different consumers disjoint even when they share a user seed.

The mixer is the SplitMix64 finalizer; it is a bijection on 64-bit words, so
distinct counters never collide inside one stream.
"""

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ALT = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

# Domain tags keep consumer streams apart.
DOMAIN_SPREAD = 1
DOMAIN_MCSMG = 2
DOMAIN_WORLD = 3
DOMAIN_SNAPSHOT = 4
DOMAIN_RRSET = 5
DOMAIN_EVAL = 6


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def uniform(key, run, draw):
    """Uniform double in [0, 1) for one (stream, run, draw) counter."""
    h = mix64(key + (np.uint64(run) + _ONE) * _GOLDEN)
    h = mix64(h ^ ((np.uint64(draw) + _ONE) * _ALT))
    return np.float64(h >> _S11) * _INV53


def _u64(x):
    return np.uint64(int(x) & MASK64)


def stream_key(seed, domain, a=0, b=0):
    """Derive a 64-bit stream key from a user seed and up to two stream ids."""
    k = _key_chain(_u64(seed), _u64(domain), _u64(a), _u64(b))
    return np.uint64(k)


@njit(cache=True)
def _key_chain(seed, domain, a, b):
    h = mix64(seed + _GOLDEN)
    h = mix64(h ^ (domain * _ALT + _GOLDEN))
    h = mix64(h + a * _GOLDEN)
    h = mix64(h ^ (b * _ALT + _ONE))
    return h


@njit(cache=True)
def uniform_block(key, run, count):
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        out[i] = uniform(key, run, i)
    return out
