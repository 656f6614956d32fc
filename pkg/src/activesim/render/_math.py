"""Tuple-vector helpers and a counter-seeded SplitMix64 generator for numba kernels."""

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_seed(seed, index):
    """Seed for an independent stream derived from (seed, index)."""
    return _mix64(_mix64(np.uint64(seed) + _GOLDEN) ^ (np.uint64(index) * _GOLDEN + _MIX2))


@njit(cache=True, inline="always")
def rand(state):
    """Uniform double in [0, 1); ``state`` is a 1-element uint64 array advanced in place."""
    state[0] += _GOLDEN
    return float(_mix64(state[0]) >> _S11) * _INV53


@njit(cache=True, inline="always")
def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True, inline="always")
def add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@njit(cache=True, inline="always")
def sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@njit(cache=True, inline="always")
def scale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


@njit(cache=True, inline="always")
def mul(a, b):
    return (a[0] * b[0], a[1] * b[1], a[2] * b[2])


@njit(cache=True, inline="always")
def neg(a):
    return (-a[0], -a[1], -a[2])


@njit(cache=True, inline="always")
def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


@njit(cache=True, inline="always")
def length(a):
    return math.sqrt(dot(a, a))


@njit(cache=True, inline="always")
def normalize(a):
    n = math.sqrt(dot(a, a))
    if n == 0.0:
        return a
    return (a[0] / n, a[1] / n, a[2] / n)


@njit(cache=True, inline="always")
def max3(a):
    return max(a[0], max(a[1], a[2]))


@njit(cache=True)
def onb(n):
    """Orthonormal tangent pair for unit ``n`` (Duff et al. 2017)."""
    sign = 1.0 if n[2] >= 0.0 else -1.0
    a = -1.0 / (sign + n[2])
    b = n[0] * n[1] * a
    t = (1.0 + sign * n[0] * n[0] * a, sign * b, -sign * n[0])
    s = (b, sign + n[1] * n[1] * a, -n[1])
    return t, s


@njit(cache=True)
def to_world(local, n):
    t, s = onb(n)
    return (
        local[0] * t[0] + local[1] * s[0] + local[2] * n[0],
        local[0] * t[1] + local[1] * s[1] + local[2] * n[1],
        local[0] * t[2] + local[1] * s[2] + local[2] * n[2],
    )
