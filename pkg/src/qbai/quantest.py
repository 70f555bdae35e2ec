"""Fixed-budget quantile estimation over a grid from 1-bit feedback.

``quant_est`` runs a multiplicative-weights posterior over the grid's
intervals and returns the interval judged to contain the tau-quantile:
with probability at least 1 - delta_fail the returned interval's CDF range
[F(x_i), F(x_{i+1})] meets (tau - delta_relax, tau + delta_relax).
``quant_est_naive`` gets the same guarantee by binary search with repeated
sampling at each probe. ``verify_interval`` checks the guarantee against a
known distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import ThresholdChannel, ThresholdQuery

__all__ = ["MnbsParams", "step_budget", "quant_est", "quant_est_naive", "verify_interval"]


@dataclass(frozen=True)
class MnbsParams:
    """Parameters for one estimation call.

    Parameters
    ----------
    tau : float
        Target quantile level, in (0, 1).
    delta_relax : float
        Half-width of the admissible CDF window; at most min(tau, 1 - tau).
    delta_fail : float
        Per-call failure probability, in (0, 1).
    kappa : float
        Learning-rate scale for the multiplicative update, in (0, 1].
    loop_constant : float
        Multiplier in the iteration budget.
    stop_mass : float or None
        If set, stop as soon as one interval holds this much posterior mass.
        None runs the full budget; the success guarantee is stated for None.
    """

    tau: float
    delta_relax: float
    delta_fail: float
    kappa: float = 1.0
    loop_constant: float = 10.0
    stop_mass: float | None = None

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if not 0.0 < self.delta_relax <= min(self.tau, 1.0 - self.tau):
            raise ValueError("delta_relax must be in (0, min(tau, 1 - tau)]")
        if not 0.0 < self.delta_fail < 1.0:
            raise ValueError("delta_fail must be in (0, 1)")
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError("kappa must be in (0, 1]")
        if self.loop_constant <= 0.0:
            raise ValueError("loop_constant must be positive")
        if self.stop_mass is not None and not 0.0 < self.stop_mass <= 1.0:
            raise ValueError("stop_mass must be in (0, 1]")


def step_budget(m: int, params: MnbsParams) -> int:
    """Iteration cap for ``quant_est`` on a grid with ``m`` intervals."""
    if m < 1:
        raise ValueError("need at least one interval")
    d = params.delta_relax
    return math.ceil(params.loop_constant * d**-2 * math.log(m / params.delta_fail))


def _check_grid(xs: np.ndarray) -> int:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or len(xs) < 2:
        raise ValueError("grid needs at least two points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("grid points must be strictly increasing")
    return len(xs) - 1


def quant_est(channel: ThresholdChannel, arm: int, xs, params: MnbsParams) -> int:
    """Locate the tau-quantile of ``arm`` on grid ``xs``; returns an interval index.

    ``xs`` has m+1 strictly increasing points (the ends may be infinite);
    intervals are numbered 0..m-1. The first point is never queried.
    """
    xs = np.asarray(xs, dtype=float)
    m = _check_grid(xs)
    t_max = step_budget(m, params)
    kdelta = params.kappa * params.delta_relax
    stop = 2.0 if params.stop_mass is None else params.stop_mass
    if _kernels.HAVE_NUMBA and isinstance(channel, ThresholdChannel):
        fvals = channel.cdf_row(arm, xs)
        best, pulls, sentinels = _kernels.mw_loop_fast(
            fvals,
            params.tau,
            kdelta,
            t_max,
            stop,
            channel.seed,
            arm,
            channel.pull_count(arm),
            math.isinf(xs[-1]),
        )
        channel.charge(arm, pulls, sentinels)
        return int(best)
    return _quant_est_reference(channel, arm, xs, params, t_max, kdelta, stop)


def _quant_est_reference(channel, arm, xs, params, t_max, kdelta, stop) -> int:
    """Protocol-pure twin of the compiled loop; must match it bit for bit."""
    m = len(xs) - 1
    w = np.full(m, 1.0 / m)
    # Bit-dependent step sizes zero the posterior drift at F = tau (a
    # symmetric pair would park it at the median); both equal kdelta at
    # tau = 1/2. Kept in lockstep with the compiled loop.
    a1 = 2.0 * (1.0 - params.tau) * kdelta
    a0 = 2.0 * params.tau * kdelta
    step = 0
    while step < t_max:
        cum = np.cumsum(w)
        j = int(np.searchsorted(cum, params.tau, side="left")) + 1
        if j >= m:
            j = m
        if j == m:
            # every weight gets the same factor from here on; the posterior
            # is frozen, so charge the rest of the budget in one go
            remaining = 1 if w.max() >= stop else t_max - step
            if math.isinf(xs[m]):
                channel.charge(arm, 0, remaining)
            else:
                channel.charge(arm, remaining, 0)
            break
        bit = channel.ask(ThresholdQuery(arm=arm, threshold=float(xs[j]))).bit
        if bit:
            w[:j] *= 1.0 + a1
            w[j:] *= 1.0 - a1
        else:
            w[:j] *= 1.0 - a0
            w[j:] *= 1.0 + a0
        # cumsum is left-to-right, matching the compiled loop's accumulation
        w /= np.cumsum(w)[-1]
        w[w < 1e-300] = 0.0
        step += 1
        if w.max() >= stop:
            break
    return int(np.argmax(w))


def quant_est_naive(channel: ThresholdChannel, arm: int, xs, params: MnbsParams) -> int:
    """Binary-search baseline: repeated sampling at each probed grid point.

    Each probe asks R = ceil(2 * delta_relax^-2 * ln(2 log2(m) / delta_fail))
    queries and compares the empirical CDF to tau. Same output contract as
    ``quant_est``.
    """
    xs = np.asarray(xs, dtype=float)
    m = _check_grid(xs)
    if m == 1:
        return 0
    reps = math.ceil(
        2.0 * params.delta_relax**-2 * math.log(2.0 * math.log2(m) / params.delta_fail)
    )
    lo, hi = 0, m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        ones = channel.query_block(arm, float(xs[mid]), reps)
        if ones / reps >= params.tau:
            hi = mid
        else:
            lo = mid
    return lo


def verify_interval(dist, xs, i: int, tau: float, delta_relax: float) -> bool:
    """Does interval ``i`` of grid ``xs`` meet the open window around tau?"""
    xs = np.asarray(xs, dtype=float)
    m = _check_grid(xs)
    if not 0 <= i < m:
        raise ValueError("interval index out of range")
    f_lo = dist.cdf(float(xs[i]))
    f_hi = dist.cdf(float(xs[i + 1]))
    return f_lo < tau + delta_relax and f_hi > tau - delta_relax
