"""Counter-based random streams.

Every vertex (or RFID tag) owns a SplitMix64 stream keyed by
``(master seed, vertex id)``; the value it uses at slot ``t`` is the
``t``-th output of that stream.  Values can be computed in any order,
so simulations give the same answer whether vertices are visited
serially, vectorised, or from compiled code.

The numpy functions here and the ``nb_*`` functions (numba) produce
bit-identical results; ``tests/test_rng.py`` pins that.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _as_u64(x):
    return np.asarray(x).astype(np.uint64)


def mix64(z):
    """SplitMix64 output finaliser, elementwise on uint64 arrays."""
    z = np.array(z, dtype=np.uint64, copy=True, ndmin=1)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_keys(seed, ids):
    """Key of the stream owned by each id (output ``id + 1`` of the master stream)."""
    ids = _as_u64(ids)
    with np.errstate(over="ignore"):
        x = _as_u64(seed) + (ids + np.uint64(1)) * GOLDEN
    return mix64(x)


def uniforms(keys, t):
    """Uniform doubles in [0, 1) for each stream key at counter ``t``."""
    with np.errstate(over="ignore"):
        x = _as_u64(keys) + _as_u64(t) * GOLDEN
    return (mix64(x) >> _S11).astype(np.float64) * _INV53


def uniform_cdf(D):
    """Cumulative distribution of the uniform palette of size D.

    Both the reference engine and the kernels map a uniform draw to a
    colour by counting the cumulative entries ``<= u``; sharing this
    array keeps the two paths identical.
    """
    return np.cumsum(np.full(D, 1.0 / D))


def derive_seed(seed_base, *index):
    """Independent 63-bit seed for the run identified by ``index`` (one or more ints)."""
    ss = np.random.SeedSequence([int(seed_base), *(int(i) for i in index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@njit(cache=True, inline="always")
def nb_mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def nb_stream_key(seed, i):
    return nb_mix64(np.uint64(seed) + (np.uint64(i) + np.uint64(1)) * GOLDEN)


@njit(cache=True, inline="always")
def nb_uniform(key, t):
    return np.float64(nb_mix64(key + np.uint64(t) * GOLDEN) >> _S11) * _INV53


@njit(cache=True, inline="always")
def nb_pick(cdf, u):
    # number of cumulative entries <= u, clamped to the palette
    lo = 0
    hi = cdf.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cdf.shape[0]:
        lo = cdf.shape[0] - 1
    return lo
