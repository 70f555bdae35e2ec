"""Round-based successive elimination over the 1-bit threshold channel.

Each round halves the quantile window, asks two grid-localization questions
per active arm (one below q, one above), clamps the running confidence
bounds onto the answer intervals' endpoints, and eliminates arms whose
upper bound falls to the best lower bound. The loop exits once some arm's
lower bound is within (c+1) grid steps of every rival's upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import PullLedger, ThresholdChannel
from .dist import Instance
from .gaps import GapConfig, gap_report, grid_resolution
from .quantest import MnbsParams, quant_est

__all__ = [
    "AlgoConfig",
    "Grid",
    "make_grid",
    "RoundTrace",
    "RunResult",
    "BoundViolation",
    "run",
    "check_anytime_bounds",
    "predicted_pull_bound",
]


@dataclass(frozen=True)
class AlgoConfig:
    """Learner parameters.

    ``kappa`` and ``loop_constant`` are forwarded to every estimation call;
    the defaults match the analysis behind ``step_budget``.
    """

    lam: float
    eps: float
    q: float
    delta: float
    c: int
    max_rounds: int = 64
    kappa: float = 1.0
    loop_constant: float = 10.0

    def __post_init__(self):
        if not self.lam > self.eps > 0:
            raise ValueError("need lam > eps > 0")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must be in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.c < 1 or self.c != int(self.c):
            raise ValueError("c must be an integer >= 1")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass(frozen=True, eq=False)
class Grid:
    """Threshold grid: sentinels, then 0, step, ..., lam."""

    xs: np.ndarray
    step: float
    n: int


def make_grid(cfg: AlgoConfig) -> Grid:
    n = grid_resolution(cfg.lam, cfg.eps, cfg.c)
    step = cfg.lam / n
    xs = np.empty(n + 3)
    xs[0] = -math.inf
    xs[1 : n + 1] = np.arange(n) * step
    xs[n + 1] = cfg.lam
    xs[n + 2] = math.inf
    return Grid(xs=xs, step=step, n=n)


@dataclass(frozen=True)
class RoundTrace:
    """Everything round t did: window, per-call budget, answers, bounds.

    ``lcb``/``ucb`` cover all arms (eliminated arms carry their last values);
    ``low_idx``/``high_idx``/``pulls`` cover the arms active this round.
    """

    t: int
    width: float
    delta_fail: float
    active: tuple[int, ...]
    low_idx: dict[int, int]
    high_idx: dict[int, int]
    lcb: tuple[float, ...]
    ucb: tuple[float, ...]
    pulls: dict[int, int]


@dataclass
class RunResult:
    returned_arm: int | None
    terminated: bool
    rounds: list[RoundTrace]
    ledger: PullLedger
    final_active: tuple[int, ...]
    qualifying: tuple[int, ...]
    grid: Grid
    config: AlgoConfig

    def to_dict(self) -> dict:
        return {
            "returned_arm": self.returned_arm,
            "terminated": self.terminated,
            "qualifying": list(self.qualifying),
            "final_active": list(self.final_active),
            "total_pulls": self.ledger.total_pulls,
            "sentinel_queries": self.ledger.sentinel_queries,
            "pulls_per_arm": list(self.ledger.pulls_per_arm),
            "rounds": [
                {
                    "t": tr.t,
                    "width": tr.width,
                    "delta_fail": tr.delta_fail,
                    "active": list(tr.active),
                    "low_idx": {str(k): v for k, v in tr.low_idx.items()},
                    "high_idx": {str(k): v for k, v in tr.high_idx.items()},
                    "lcb": list(tr.lcb),
                    "ucb": list(tr.ucb),
                    "pulls": {str(k): v for k, v in tr.pulls.items()},
                }
                for tr in self.rounds
            ],
        }


def _qualifying(lcb_i, ucb_i, active, margin):
    """Arms whose lower bound meets every rival's upper bound minus slack.

    Bounds are grid indices and the slack is ``margin`` grid steps, so the
    comparison is integer-exact; on float values the frequent zero-margin
    ties would break on rounding error and cost a full extra round.
    """
    out = []
    for k in active:
        rival = max((ucb_i[a - 1] for a in active if a != k), default=0)
        if lcb_i[k - 1] + margin >= rival:
            out.append(k)
    return out


def run(channel: ThresholdChannel, cfg: AlgoConfig, rng=None) -> RunResult:
    """Identify an eps-satisfying arm; the learner itself is deterministic.

    ``rng`` is accepted for interface compatibility and ignored: every
    random draw lives behind the channel.
    """
    inst = channel.instance
    if inst.q != cfg.q or inst.lam != cfg.lam:
        raise ValueError("config (q, lam) must match the channel's instance")
    grid = make_grid(cfg)
    K = inst.K
    # Bounds are kept as indices into grid.xs; xs[1] = 0 and xs[n+1] = lam.
    lcb_i = [1] * K
    ucb_i = [grid.n + 1] * K
    active = list(range(1, K + 1))
    margin = cfg.c + 1
    cap = min(cfg.q, 1.0 - cfg.q)
    rounds: list[RoundTrace] = []
    terminated = False
    returned = None
    quals: tuple[int, ...] = ()
    t = 0
    while t < cfg.max_rounds:
        qs = _qualifying(lcb_i, ucb_i, active, margin)
        if qs:
            returned, quals, terminated = qs[0], tuple(qs), True
            break
        if not active:
            break
        t += 1
        width = 2.0 ** (1 - t) * cap
        df = cfg.delta * width / (2.0 * len(active))
        low_idx: dict[int, int] = {}
        high_idx: dict[int, int] = {}
        pulls: dict[int, int] = {}
        for k in active:
            before = channel.pull_count(k)
            li = quant_est(
                channel,
                k,
                grid.xs,
                MnbsParams(
                    tau=cfg.q - width / 2.0,
                    delta_relax=width / 2.0,
                    delta_fail=df,
                    kappa=cfg.kappa,
                    loop_constant=cfg.loop_constant,
                ),
            )
            ui = quant_est(
                channel,
                k,
                grid.xs,
                MnbsParams(
                    tau=cfg.q + width / 2.0,
                    delta_relax=width / 2.0,
                    delta_fail=df,
                    kappa=cfg.kappa,
                    loop_constant=cfg.loop_constant,
                ),
            )
            low_idx[k] = li
            high_idx[k] = ui
            lcb_i[k - 1] = max(li, lcb_i[k - 1])
            ucb_i[k - 1] = min(ui + 1, ucb_i[k - 1])
            pulls[k] = channel.pull_count(k) - before
        best_i = max(lcb_i[a - 1] for a in active)
        rounds.append(
            RoundTrace(
                t=t,
                width=width,
                delta_fail=df,
                active=tuple(active),
                low_idx=low_idx,
                high_idx=high_idx,
                lcb=tuple(float(grid.xs[i]) for i in lcb_i),
                ucb=tuple(float(grid.xs[i]) for i in ucb_i),
                pulls=pulls,
            )
        )
        active = [a for a in active if ucb_i[a - 1] > best_i]
    else:
        qs = _qualifying(lcb_i, ucb_i, active, margin)
        if qs:
            returned, quals, terminated = qs[0], tuple(qs), True
    return RunResult(
        returned_arm=returned,
        terminated=terminated,
        rounds=rounds,
        ledger=channel.snapshot_ledger(),
        final_active=tuple(active),
        qualifying=quals,
        grid=grid,
        config=cfg,
    )


@dataclass(frozen=True)
class BoundViolation:
    kind: str
    round: int
    arm: int
    detail: str


def check_anytime_bounds(result: RunResult, inst: Instance) -> list[BoundViolation]:
    """Audit a trace against the per-round confidence guarantees.

    Probabilistic checks (the q-quantile bracket and the window inequalities)
    apply to each round's active arms; structural checks (bound monotonicity,
    grid membership, bracket ordering for surviving arms) must never fail.
    """
    cfg = result.config
    step = result.grid.step
    grid_values = set(float(v) for v in result.grid.xs[1:-1])
    K = inst.K
    out: list[BoundViolation] = []
    prev_lcb = [0.0] * K
    prev_ucb = [cfg.lam] * K
    for idx, tr in enumerate(result.rounds):
        for k in tr.active:
            l = tr.lcb[k - 1]
            u = tr.ucb[k - 1]
            ql = inst.arms[k - 1].lower_quantile(cfg.q)
            qu = inst.arms[k - 1].upper_quantile(cfg.q)
            if not l < ql:
                out.append(BoundViolation("lcb_below_quantile", tr.t, k, f"lcb={l} q-quantile={ql}"))
            if not qu <= u:
                out.append(BoundViolation("ucb_above_upper_quantile", tr.t, k, f"ucb={u} upper={qu}"))
            win_lo = inst.arms[k - 1].upper_quantile(max(cfg.q - tr.width, 0.0))
            if not win_lo <= l + step:
                out.append(BoundViolation("lower_window", tr.t, k, f"lcb={l} target={win_lo}"))
            win_hi = inst.arms[k - 1].lower_quantile(min(cfg.q + tr.width, 1.0))
            if not u < win_hi + step:
                out.append(BoundViolation("upper_window", tr.t, k, f"ucb={u} target={win_hi}"))
        for k in range(1, K + 1):
            if tr.lcb[k - 1] < prev_lcb[k - 1]:
                out.append(BoundViolation("monotone_lcb", tr.t, k, f"{tr.lcb[k-1]} < {prev_lcb[k-1]}"))
            if tr.ucb[k - 1] > prev_ucb[k - 1]:
                out.append(BoundViolation("monotone_ucb", tr.t, k, f"{tr.ucb[k-1]} > {prev_ucb[k-1]}"))
            if tr.lcb[k - 1] not in grid_values:
                out.append(BoundViolation("grid_membership", tr.t, k, f"lcb={tr.lcb[k-1]}"))
            if tr.ucb[k - 1] not in grid_values:
                out.append(BoundViolation("grid_membership", tr.t, k, f"ucb={tr.ucb[k-1]}"))
        survivors = (
            result.rounds[idx + 1].active if idx + 1 < len(result.rounds) else result.final_active
        )
        for k in survivors:
            if not tr.lcb[k - 1] < tr.ucb[k - 1]:
                out.append(
                    BoundViolation("bracket_order", tr.t, k, f"lcb={tr.lcb[k-1]} ucb={tr.ucb[k-1]}")
                )
        prev_lcb = list(tr.lcb)
        prev_ucb = list(tr.ucb)
    return out


def predicted_pull_bound(inst: Instance, cfg: AlgoConfig) -> float:
    """Theoretical pull-count scale: sum of inverse-square effective gaps.

    Unit leading constant; meant for scaling comparisons, not absolute
    prediction. Infinite when the instance gap is zero.
    """
    gcfg = GapConfig(lam=cfg.lam, eps=cfg.eps, q=cfg.q, c=cfg.c)
    report = gap_report(inst, gcfg)
    if report.delta <= 0.0:
        return math.inf
    total = 0.0
    log_terms = math.log(1.0 / cfg.delta) + math.log(cfg.c * cfg.lam * inst.K / cfg.eps)
    for row in report.rows:
        g = max(row.delta_ours, report.delta)
        total += g**-2 * (log_terms + math.log(1.0 / g))
    return total
