"""The 1-bit threshold-query protocol between learner and agents.

Each query names an arm and a threshold; the agent at that arm draws its
next reward and answers one bit, whether the reward is at or below the
threshold. Agents are memoryless: the bit depends only on the seed, the arm,
that arm's pull counter, and the threshold, never on query history.

Thresholds at -inf and +inf are answered 0 and 1 without drawing a reward;
those sentinel queries are tallied separately and consume no randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dist import Instance

__all__ = ["ThresholdQuery", "BitFeedback", "PullLedger", "ThresholdChannel"]


@dataclass(frozen=True)
class ThresholdQuery:
    """One downlink message: arm index (1-based) and threshold."""

    arm: int
    threshold: float
    round: int | None = None  # diagnostic only; agents must ignore it


@dataclass(frozen=True)
class BitFeedback:
    """One uplink message."""

    bit: int


@dataclass
class PullLedger:
    """Pull and sentinel counts accumulated by a channel."""

    pulls_per_arm: list[int] = field(default_factory=list)
    sentinel_queries: int = 0

    @property
    def total_pulls(self) -> int:
        return sum(self.pulls_per_arm)

    @property
    def uplink_bits(self) -> int:
        """Bits actually sent up; sentinel answers are known a priori."""
        return self.total_pulls


class ThresholdChannel:
    """Simulates the agents for a fixed instance under a fixed seed.

    The reward for pull t of arm k is Q_k(u) for a counter-derived uniform
    u, and the answered bit 1{Q_k(u) <= threshold} is computed as
    1{u <= F_k(threshold)}, which is the same event. Trials with equal seeds
    are reproducible regardless of query order across arms.
    """

    def __init__(self, instance: Instance, seed: int):
        self.instance = instance
        self.seed = int(seed)
        self._pulls = [0] * instance.K
        self._sentinels = 0

    # -- protocol surface --------------------------------------------------

    def ask(self, query: ThresholdQuery) -> BitFeedback:
        return BitFeedback(bit=self.query_bit(query.arm, query.threshold))

    def query_bit(self, arm: int, threshold: float) -> int:
        """Answer one threshold query, advancing the arm's pull counter."""
        self._check_arm(arm)
        if math.isinf(threshold):
            self._sentinels += 1
            return 0 if threshold < 0 else 1
        p = self.instance.arms[arm - 1].cdf(threshold)
        pull = self._pulls[arm - 1]
        self._pulls[arm - 1] = pull + 1
        u = _kernels.uniform_for(self.seed, arm, pull)
        return 1 if u <= p else 0

    def query_block(self, arm: int, threshold: float, count: int) -> int:
        """Ask the same threshold ``count`` times; returns the number of 1s."""
        self._check_arm(arm)
        if count < 0:
            raise ValueError("count must be nonnegative")
        if count == 0:
            return 0
        if math.isinf(threshold):
            self._sentinels += count
            return 0 if threshold < 0 else count
        p = self.instance.arms[arm - 1].cdf(threshold)
        start = self._pulls[arm - 1]
        self._pulls[arm - 1] = start + count
        u = _kernels.uniform_block(self.seed, arm, start, count)
        return int(np.count_nonzero(u <= p))

    # -- ledger ------------------------------------------------------------

    def snapshot_ledger(self) -> PullLedger:
        return PullLedger(pulls_per_arm=list(self._pulls), sentinel_queries=self._sentinels)

    def reset_ledger(self) -> None:
        """Zero the counters; this also rewinds every arm's bit stream."""
        self._pulls = [0] * self.instance.K
        self._sentinels = 0

    # -- hooks for the compiled estimation loop -----------------------------

    def pull_count(self, arm: int) -> int:
        self._check_arm(arm)
        return self._pulls[arm - 1]

    def cdf_row(self, arm: int, xs: np.ndarray) -> np.ndarray:
        """CDF of the arm at each grid point (0 at -inf, 1 at +inf)."""
        self._check_arm(arm)
        return self.instance.arms[arm - 1].cdf(np.asarray(xs, dtype=float))

    def charge(self, arm: int, pulls: int, sentinels: int) -> None:
        """Account for queries executed on the channel's behalf."""
        self._check_arm(arm)
        if pulls < 0 or sentinels < 0:
            raise ValueError("counts must be nonnegative")
        self._pulls[arm - 1] += pulls
        self._sentinels += sentinels

    def _check_arm(self, arm: int) -> None:
        if not 1 <= arm <= self.instance.K:
            raise ValueError(f"arm {arm} out of range 1..{self.instance.K}")
