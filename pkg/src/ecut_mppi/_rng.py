"""Counter-free per-stream normal generator usable inside numba kernels.

xoroshiro128+ seeded through splitmix64, with the 256-layer ziggurat for
standard normals. Each Monte-Carlo control sample owns one two-word state,
so draws never depend on how samples are spread over threads. The functions
are plain njit functions and can be called from Python for reference paths.
"""

import math

import numpy as np
from numba import njit

_M52 = float(1 << 52)
_R = 3.6541528853610088
_V = 0.00492867323399


def _ziggurat_tables():
    ki = np.zeros(256, dtype=np.uint64)
    wi = np.zeros(256)
    fi = np.zeros(256)
    dn = tn = _R
    q = _V / math.exp(-0.5 * dn * dn)
    ki[0] = np.uint64(int((dn / q) * _M52))
    ki[1] = 0
    wi[0] = q / _M52
    wi[255] = dn / _M52
    fi[0] = 1.0
    fi[255] = math.exp(-0.5 * dn * dn)
    for i in range(254, 0, -1):
        dn = math.sqrt(-2.0 * math.log(_V / dn + math.exp(-0.5 * dn * dn)))
        ki[i + 1] = np.uint64(int((dn / tn) * _M52))
        tn = dn
        fi[i] = math.exp(-0.5 * dn * dn)
        wi[i] = dn / _M52
    return ki, wi, fi


ZIG_K, ZIG_W, ZIG_F = _ziggurat_tables()


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def seed_state(seed, state):
    """Fill a uint64[2] state from an integer seed via splitmix64."""
    z = np.uint64(seed)
    for j in range(2):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        y = z
        y = (y ^ (y >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        y = (y ^ (y >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        state[j] = y ^ (y >> np.uint64(31))


@njit(cache=True)
def next_u64(state):
    s0 = state[0]
    s1 = state[1]
    out = s0 + s1
    s1 ^= s0
    state[0] = _rotl(s0, 24) ^ s1 ^ (s1 << np.uint64(16))
    state[1] = _rotl(s1, 37)
    return out


@njit(cache=True)
def next_double(state):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def next_normal(state):
    while True:
        r = next_u64(state)
        idx = r & np.uint64(0xFF)
        r >>= np.uint64(8)
        sign = r & np.uint64(1)
        rabs = (r >> np.uint64(1)) & np.uint64(0x000FFFFFFFFFFFFF)
        x = float(rabs) * ZIG_W[idx]
        if sign:
            x = -x
        if rabs < ZIG_K[idx]:
            return x
        if idx == 0:
            while True:
                xx = -(1.0 / _R) * math.log1p(-next_double(state))
                yy = -math.log1p(-next_double(state))
                if yy + yy > xx * xx:
                    return -(_R + xx) if sign else _R + xx
        else:
            if (ZIG_F[idx - 1] - ZIG_F[idx]) * next_double(state) + ZIG_F[idx] < math.exp(-0.5 * x * x):
                return x


@njit(cache=True)
def fill_normals(seed, n):
    state = np.empty(2, dtype=np.uint64)
    seed_state(seed, state)
    out = np.empty(n)
    for i in range(n):
        out[i] = next_normal(state)
    return out
