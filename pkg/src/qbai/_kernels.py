"""Counter-based bit generation and the hot estimation loop.

The uniform behind pull ``t`` of arm ``k`` under seed ``s`` is a pure
function of (s, k, t): three chained 64-bit finalizer rounds. Replaying any
prefix of an arm's pull sequence therefore reproduces the same bits no
matter how queries interleave across arms.

The multiplicative-weights loop is compiled with numba when available; a
plain-Python twin of the same arithmetic lives in ``quantest`` and the two
are held to exact agreement by tests.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


_M64 = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_C_ARM = 0xBF58476D1CE4E5B9
_C_PULL = 0x94D049BB133111EB
_MIX1 = 0xFF51AFD7ED558CCD
_MIX2 = 0xC4CEB9FE1A85EC53
_U53 = 2.0**-53


def fmix64(z: int) -> int:
    """64-bit avalanche finalizer (murmur3 style)."""
    z &= _M64
    z ^= z >> 33
    z = (z * _MIX1) & _M64
    z ^= z >> 33
    z = (z * _MIX2) & _M64
    z ^= z >> 33
    return z


def arm_key(seed: int, arm: int) -> int:
    """Mix seed and arm index; pulls are folded in per query."""
    h = fmix64((seed + _GOLD) & _M64)
    return fmix64((h + arm * _C_ARM) & _M64)


def uniform_for(seed: int, arm: int, pull: int) -> float:
    """The uniform in (0, 1) driving pull ``pull`` of ``arm`` under ``seed``."""
    h = fmix64((arm_key(seed, arm) + pull * _C_PULL) & _M64)
    return ((h >> 11) + 0.5) * _U53

def uniform_block(seed: int, arm: int, pull_start: int, count: int) -> np.ndarray:
    """Vectorized ``uniform_for`` over ``count`` consecutive pull indices."""
    base = np.uint64(arm_key(seed, arm))
    pulls = np.arange(pull_start, pull_start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = base + pulls * np.uint64(_C_PULL)
        z ^= z >> np.uint64(33)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(33)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(33)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


@njit(cache=True)
def _mw_loop(fvals, tau, kdelta, t_max, stop_mass, akey, pull_start, hi_sentinel):
    """Multiplicative-weights interval tracking over one arm's bit stream.

    fvals[j] is the CDF at grid point j (entries for infinite endpoints are
    never read). Returns (best interval, pulls consumed, sentinel queries).
    """
    m = fvals.shape[0] - 1
    w = np.full(m, 1.0 / m)
    # bit-dependent magnitudes put the drift's zero at F = tau; they
    # coincide (= kdelta) at tau = 1/2
    a1 = 2.0 * (1.0 - tau) * kdelta
    a0 = 2.0 * tau * kdelta
    u1 = 1.0 + a1
    d1 = 1.0 - a1
    u0 = 1.0 + a0
    d0 = 1.0 - a0
    pulls = 0
    sentinels = 0
    step = 0
    while step < t_max:
        cum = 0.0
        j = m
        for i in range(m):
            cum += w[i]
            if cum >= tau:
                j = i + 1
                break
        if j == m:
            # top-point query scales every weight alike: the posterior is
            # frozen, so charge the remaining budget arithmetically
            wmax = 0.0
            for i in range(m):
                if w[i] > wmax:
                    wmax = w[i]
            remaining = 1 if wmax >= stop_mass else t_max - step
            if hi_sentinel:
                sentinels += remaining
            else:
                pulls += remaining
            break
        z = (akey + np.uint64(pulls + pull_start) * np.uint64(_C_PULL))
        z ^= z >> np.uint64(33)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(33)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(33)
        u = (np.float64(z >> np.uint64(11)) + 0.5) * _U53
        bit = u <= fvals[j]
        pulls += 1
        if bit:
            for i in range(j):
                w[i] *= u1
            for i in range(j, m):
                w[i] *= d1
        else:
            for i in range(j):
                w[i] *= d0
            for i in range(j, m):
                w[i] *= u0
        s = 0.0
        for i in range(m):
            s += w[i]
        wmax = 0.0
        for i in range(m):
            w[i] /= s
            if w[i] < 1e-300:
                w[i] = 0.0
            if w[i] > wmax:
                wmax = w[i]
        step += 1
        if wmax >= stop_mass:
            break
    best = 0
    bw = w[0]
    for i in range(1, m):
        if w[i] > bw:
            bw = w[i]
            best = i
    return best, pulls, sentinels


def mw_loop_fast(fvals, tau, kdelta, t_max, stop_mass, seed, arm, pull_start, hi_sentinel):
    """Typed entry point for the compiled loop."""
    return _mw_loop(
        np.ascontiguousarray(fvals, dtype=np.float64),
        float(tau),
        float(kdelta),
        int(t_max),
        float(stop_mass),
        np.uint64(arm_key(seed, arm)),
        int(pull_start),
        bool(hi_sentinel),
    )
