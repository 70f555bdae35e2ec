"""Independent oracles used by the tests.

Everything here recomputes target quantities from first principles (CDF
evaluation only, generic bisection, direct simulation) so the library's own
quantile/gap code is never used to check itself.
"""

from __future__ import annotations

import math

import numpy as np


def cdf_left_of(dist, x: float, h: float = 1e-12) -> float:
    """Left limit F(x-) by evaluating just below x (oracle-side only)."""
    if math.isinf(x):
        return 0.0 if x < 0 else 1.0
    lo = x - max(abs(x), 1.0) * h
    return float(dist.cdf(lo))


def quantile_by_bisection(dist, p: float, lo: float = -1e6, hi: float = 1e6) -> float:
    """inf{x : F(x) >= p} via bisection on the CDF alone."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    if dist.cdf(lo) >= p:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dist.cdf(mid) >= p:
            hi = mid
        else:
            lo = mid
    return hi


def upper_quantile_by_bisection(dist, p: float, lo: float = -1e6, hi: float = 1e6) -> float:
    """sup{x : F(x) <= p} via bisection on the CDF alone."""
    if not 0.0 <= p < 1.0:
        raise ValueError("p must be in [0, 1)")
    if dist.cdf(hi) <= p:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dist.cdf(mid) <= p:
            lo = mid
        else:
            hi = mid
    return lo


def empirical_cdf_distance(dist, samples: np.ndarray, grid: np.ndarray) -> float:
    """sup over grid of |empirical CDF - analytic CDF|."""
    samples = np.sort(np.asarray(samples, dtype=float))
    emp = np.searchsorted(samples, grid, side="right") / len(samples)
    return float(np.max(np.abs(emp - dist.cdf(grid))))


def interval_meets_window(dist, xs, i: int, tau: float, delta: float) -> bool:
    """Direct evaluation of the estimation guarantee for one interval."""
    xs = np.asarray(xs, dtype=float)
    f_lo = 0.0 if math.isinf(xs[i]) and xs[i] < 0 else float(dist.cdf(float(xs[i])))
    f_hi = 1.0 if math.isinf(xs[i + 1]) else float(dist.cdf(float(xs[i + 1])))
    return f_lo < tau + delta and f_hi > tau - delta


def chi2_two_bins(counts: np.ndarray, probs: np.ndarray) -> float:
    """Pearson statistic for observed counts vs expected proportions."""
    counts = np.asarray(counts, dtype=float)
    expected = probs * counts.sum()
    return float(np.sum((counts - expected) ** 2 / expected))
