"""Arm hardness gaps: bisection over monotone predicates plus a grid oracle.

Five gap notions are computed per arm: the discretization-aware gap ("ours")
at finite c, its c -> infinity limit, the clipped ("modified") variant, and
the two classical lower-quantile gaps (nkss, hr). Satisfying arms take a
max over subsets S between the satisfying set and the full arm set, each
subset capped by the non-satisfying arms outside it, so non-satisfying gaps
are always computed first.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .dist import Instance, clip, satisfying_set

__all__ = [
    "GapConfig",
    "GapRow",
    "GapReport",
    "ceil_int",
    "grid_resolution",
    "gap_nonsatisfying",
    "gap_satisfying",
    "gap_modified",
    "gap_ours",
    "gap_nkss",
    "gap_hr",
    "gap_bruteforce",
    "gap_report",
    "instance_gap",
    "classify_instance",
    "choose_c",
]

_MAX_FREE_ARMS = 20


def ceil_int(v: float, guard: float = 1e-9) -> int:
    """Ceiling with a tiny backoff so ratios meant to be integers stay put.

    Plain ceil(3/0.0375) gives 81 because the quotient floats a hair above
    80; the guard absorbs that.
    """
    return math.ceil(v - guard)


def grid_resolution(lam: float, eps: float, c: int) -> int:
    """Number of grid cells n = ceil((c+1) * lambda / eps)."""
    if not (lam > 0 and eps > 0):
        raise ValueError("lam and eps must be positive")
    return ceil_int((c + 1) * lam / eps)


@dataclass(frozen=True)
class GapConfig:
    """Gap computation parameters; q and lam must match the instance.

    ``c`` is a positive integer or math.inf; the infinite case evaluates the
    limit where the grid step vanishes and the satisfying slack tends to eps.
    """

    lam: float
    eps: float
    q: float
    c: float
    bisection_tol: float = 1e-9

    def __post_init__(self):
        if not self.lam > self.eps > 0:
            raise ValueError("need lam > eps > 0")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must be in (0, 1)")
        if self.c != math.inf:
            if self.c < 1 or self.c != int(self.c):
                raise ValueError("c must be a positive integer or math.inf")
        if not self.bisection_tol > 0:
            raise ValueError("bisection_tol must be positive")

    @property
    def n(self) -> int | None:
        return None if self.c == math.inf else grid_resolution(self.lam, self.eps, int(self.c))

    @property
    def step(self) -> float:
        """Grid step; 0 in the limit case."""
        return 0.0 if self.c == math.inf else self.lam / self.n

    @property
    def sat_slack(self) -> float:
        """Slack c * step in the satisfying predicate; eps in the limit."""
        return self.eps if self.c == math.inf else self.c * self.step

    def _check(self, inst: Instance) -> None:
        if inst.q != self.q or inst.lam != self.lam:
            raise ValueError("config (q, lam) must match the instance")


def _sup_bisect(pred, cap: float, tol: float) -> float:
    """sup{d in [0, cap] : pred(d)} for a downward-closed feasible set.

    Returns a certified-feasible point: cap when pred(cap), else the lower
    end of the final bracket; 0 when even pred(0) fails (empty-set sup).
    """
    if cap <= 0.0:
        return 0.0
    if pred(cap):
        return cap
    if not pred(0.0):
        return 0.0
    lo, hi = 0.0, cap
    for _ in range(80):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _natural_cap(q: float) -> float:
    return min(q, 1.0 - q)


def _lq(arm, p, lam, modified):
    """Lower quantile at p (clipped into (0, 1]); min with lam when modified."""
    v = arm.lower_quantile(np.minimum(p, 1.0))
    return np.minimum(v, lam) if modified else v


def _uq(arm, p, modified):
    """Upper quantile at p (clipped into [0, 1)); max with 0 when modified."""
    v = arm.upper_quantile(np.maximum(p, 0.0))
    return np.maximum(v, 0.0) if modified else v


def _nonsat_pred(inst, k, cfg, modified):
    arm_k = inst.arms[k - 1]

    def pred(d):
        lhs = _lq(arm_k, inst.q + np.asarray(d, dtype=float), cfg.lam, modified)
        rhs = _uq(inst.arms[0], inst.q - np.asarray(d, dtype=float), modified)
        for a in inst.arms[1:]:
            rhs = np.maximum(rhs, _uq(a, inst.q - np.asarray(d, dtype=float), modified))
        return lhs <= rhs - cfg.step

    return pred


def _sat_pred(inst, k, others, cfg, modified):
    arm_k = inst.arms[k - 1]
    rivals = [inst.arms[a - 1] for a in others]

    def pred(d):
        d = np.asarray(d, dtype=float)
        lhs = _uq(arm_k, inst.q - d, modified)
        if not rivals:
            return np.full(d.shape, True) if d.ndim else True
        rhs = _lq(rivals[0], inst.q + d, cfg.lam, modified)
        for a in rivals[1:]:
            rhs = np.maximum(rhs, _lq(a, inst.q + d, cfg.lam, modified))
        return lhs >= rhs - cfg.sat_slack

    return pred


def gap_nonsatisfying(inst: Instance, k: int, cfg: GapConfig, *, modified: bool = False) -> float:
    """Gap of a non-satisfying arm: how far below the field it provably sits."""
    cfg._check(inst)
    sat = satisfying_set(inst, cfg.eps).members
    if k in sat:
        raise ValueError(f"arm {k} is eps-satisfying; use gap_satisfying")
    pred = _nonsat_pred(inst, k, cfg, modified)
    return _sup_bisect(lambda d: bool(pred(d)), _natural_cap(inst.q), cfg.bisection_tol)


def gap_satisfying(
    inst: Instance,
    k: int,
    cfg: GapConfig,
    nonsat_gaps: dict[int, float] | None = None,
    *,
    modified: bool = False,
) -> tuple[float, frozenset[int]]:
    """Gap of a satisfying arm and the subset attaining it.

    Enumerates every S between the satisfying set and all arms; each subset's
    range is capped by the smallest non-satisfying gap outside S (computed
    here when ``nonsat_gaps`` is not supplied).
    """
    cfg._check(inst)
    sat = satisfying_set(inst, cfg.eps).members
    if k not in sat:
        raise ValueError(f"arm {k} is not eps-satisfying; use gap_nonsatisfying")
    free = sorted(a for a in range(1, inst.K + 1) if a not in sat)
    if len(free) > _MAX_FREE_ARMS:
        raise ValueError(f"refusing to enumerate 2^{len(free)} subsets")
    if nonsat_gaps is None:
        nonsat_gaps = {a: gap_nonsatisfying(inst, a, cfg, modified=modified) for a in free}
    cap0 = _natural_cap(inst.q)
    best_val = -1.0
    best_subset: frozenset[int] = frozenset()
    for mask in range(1 << len(free)):
        extra = [a for i, a in enumerate(free) if mask >> i & 1]
        subset = frozenset(sat) | frozenset(extra)
        outside = [a for a in free if a not in subset]
        cap = min([nonsat_gaps[a] for a in outside] + [cap0])
        others = sorted(subset - {k})
        pred = _sat_pred(inst, k, others, cfg, modified)
        val = _sup_bisect(lambda d: bool(pred(d)), cap, cfg.bisection_tol)
        if val > best_val:
            best_val = val
            best_subset = subset
    return best_val, best_subset


def gap_ours(inst: Instance, k: int, cfg: GapConfig, *, modified: bool = False) -> float:
    """Dispatch on whether arm k is eps-satisfying."""
    sat = satisfying_set(inst, cfg.eps).members
    if k in sat:
        return gap_satisfying(inst, k, cfg, modified=modified)[0]
    return gap_nonsatisfying(inst, k, cfg, modified=modified)


def gap_modified(
    inst: Instance, k: int, cfg: GapConfig, nonsat_gaps: dict[int, float] | None = None
) -> float:
    """Clipped-quantile gap; equals the plain gap of the clipped instance."""
    sat = satisfying_set(inst, cfg.eps).members
    if k in sat:
        return gap_satisfying(inst, k, cfg, nonsat_gaps, modified=True)[0]
    return gap_nonsatisfying(inst, k, cfg, modified=True)


def _best_arm(inst: Instance) -> int:
    qs = inst.quantiles()
    best = qs.max()
    winners = np.nonzero(qs == best)[0]
    if len(winners) > 1:
        raise ValueError("tied best arms: classical gaps undefined")
    return int(winners[0]) + 1


def _lq_floor(arm, p):
    """Lower quantile extended to p <= 0 by the infimum of the support."""
    if p <= 0.0:
        return arm.support()[0]
    return arm.lower_quantile(min(p, 1.0))


def gap_nkss(inst: Instance, k: int, q: float, tol: float = 1e-9) -> float:
    """Classical per-arm gap against the unique best arm's lower quantile."""
    if inst.K < 2:
        raise ValueError("needs at least two arms")
    star = _best_arm(inst)
    if k == star:
        qs = inst.quantiles()
        order = np.argsort(-qs, kind="stable")
        runner = int(order[1]) + 1 if int(order[0]) + 1 == star else int(order[0]) + 1
        return gap_nkss(inst, runner, q, tol)
    arm_k = inst.arms[k - 1]
    arm_s = inst.arms[star - 1]

    def pred(d):
        return arm_k.lower_quantile(min(q + d, 1.0)) <= _lq_floor(arm_s, q - d)

    return _sup_bisect(pred, _natural_cap(q), tol)


def gap_hr(inst: Instance, k: int, q: float, tol: float = 1e-9) -> float:
    """Half-relaxation gap; the best arm's case consumes the others' gaps."""
    if inst.K < 2:
        raise ValueError("needs at least two arms")
    star = _best_arm(inst)
    if k != star:
        arm_k = inst.arms[k - 1]

        def pred(d):
            rhs = max(_lq_floor(a, q - d) for a in inst.arms)
            return arm_k.lower_quantile(min(q + d, 1.0)) <= rhs

        return _sup_bisect(pred, _natural_cap(q), tol)
    sub_gaps = {a: gap_hr(inst, a, q, tol) for a in range(1, inst.K + 1) if a != star}
    rhs = max(
        inst.arms[a - 1].lower_quantile(min(q + g, 1.0)) for a, g in sub_gaps.items()
    )
    arm_s = inst.arms[star - 1]

    def pred_star(d):
        return _lq_floor(arm_s, q - d) >= rhs

    return _sup_bisect(pred_star, q, tol)


def choose_c(theta: float, lam: float | None = None, eps: float | None = None) -> int:
    """Smallest integer c with c*step >= theta*eps, via c = ceil(2 theta/(1-theta))."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must be in (0, 1)")
    c = max(1, ceil_int(2.0 * theta / (1.0 - theta)))
    if lam is not None and eps is not None:
        step = lam / grid_resolution(lam, eps, c)
        if c * step < theta * eps - 1e-12:
            raise ValueError("chosen c fails the slack guarantee for these (lam, eps)")
    return c


# -- brute-force oracle ------------------------------------------------------


def _grid_points(cap: float, step: float) -> np.ndarray:
    count = int(math.floor(cap / step + 1e-9))
    return np.arange(count + 1, dtype=float) * step


def _brute_sup(pred, ds: np.ndarray) -> float:
    ok = np.asarray(pred(ds))
    idx = np.nonzero(ok)[0]
    return float(ds[idx[-1]]) if len(idx) else 0.0


def _brute_ours(inst, k, cfg, grid_step, modified):
    sat = satisfying_set(inst, cfg.eps).members
    ds = _grid_points(_natural_cap(inst.q), grid_step)
    if k not in sat:
        return _brute_sup(_nonsat_pred(inst, k, cfg, modified), ds)
    free = sorted(a for a in range(1, inst.K + 1) if a not in sat)
    if len(free) > _MAX_FREE_ARMS:
        raise ValueError(f"refusing to enumerate 2^{len(free)} subsets")
    nonsat = {a: _brute_sup(_nonsat_pred(inst, a, cfg, modified), ds) for a in free}
    best = 0.0
    for mask in range(1 << len(free)):
        subset = frozenset(sat) | {a for i, a in enumerate(free) if mask >> i & 1}
        outside = [a for a in free if a not in subset]
        cap = min([nonsat[a] for a in outside] + [_natural_cap(inst.q)])
        pred = _sat_pred(inst, k, sorted(subset - {k}), cfg, modified)
        best = max(best, _brute_sup(pred, ds[ds <= cap + 1e-12]))
    return best


def gap_bruteforce(
    inst: Instance, k: int, cfg: GapConfig, grid_step: float, definition: str = "ours"
) -> float:
    """Direct predicate scan over a Delta grid; the oracle for the bisection.

    ``definition`` is one of ours/limit/modified/nkss/hr. Returns the largest
    feasible grid multiple (0 when even Delta=0 fails).
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    cfg._check(inst)
    if definition == "ours":
        return _brute_ours(inst, k, cfg, grid_step, False)
    if definition == "limit":
        return _brute_ours(inst, k, dataclasses.replace(cfg, c=math.inf), grid_step, False)
    if definition == "modified":
        return _brute_ours(inst, k, cfg, grid_step, True)
    if definition not in ("nkss", "hr"):
        raise ValueError(f"unknown definition {definition!r}")
    q = inst.q
    star = _best_arm(inst)
    ds = _grid_points(_natural_cap(q), grid_step)
    if definition == "nkss":
        if k == star:
            qs = inst.quantiles()
            order = np.argsort(-qs, kind="stable")
            runner = int(order[1]) + 1 if int(order[0]) + 1 == star else int(order[0]) + 1
            return gap_bruteforce(inst, runner, cfg, grid_step, "nkss")
        arm_s = inst.arms[star - 1]

        def pred(d):
            lo = np.where(q - d > 0, arm_s.lower_quantile(np.maximum(q - d, 1e-300)),
                          arm_s.support()[0])
            return inst.arms[k - 1].lower_quantile(np.minimum(q + d, 1.0)) <= lo

        return _brute_sup(pred, ds)
    # hr
    def sub_pred(arm_k):
        def pred(d):
            rhs = None
            for a in inst.arms:
                lo = np.where(q - d > 0, a.lower_quantile(np.maximum(q - d, 1e-300)),
                              a.support()[0])
                rhs = lo if rhs is None else np.maximum(rhs, lo)
            return arm_k.lower_quantile(np.minimum(q + d, 1.0)) <= rhs

        return pred

    if k != star:
        return _brute_sup(sub_pred(inst.arms[k - 1]), ds)
    sub = {a: gap_bruteforce(inst, a, cfg, grid_step, "hr") for a in range(1, inst.K + 1) if a != star}
    rhs = max(inst.arms[a - 1].lower_quantile(min(q + g, 1.0)) for a, g in sub.items())
    arm_s = inst.arms[star - 1]
    ds_q = _grid_points(q, grid_step)

    def pred_star(d):
        lo = np.where(q - d > 0, arm_s.lower_quantile(np.maximum(q - d, 1e-300)),
                      arm_s.support()[0])
        return lo >= rhs

    return _brute_sup(pred_star, ds_q)


# -- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class GapRow:
    arm: int
    delta_ours: float
    delta_limit: float
    delta_modified: float
    delta_nkss: float | None
    delta_hr: float | None
    best_subset: frozenset[int] | None


@dataclass(frozen=True)
class GapReport:
    rows: tuple[GapRow, ...]
    eps_satisfying: frozenset[int]
    delta: float
    classification: str
    eps_tilde: float
    n: int | None
    config: GapConfig

    def to_dict(self) -> dict:
        return {
            "arms": [
                {
                    "arm": r.arm,
                    "delta_ours": r.delta_ours,
                    "delta_limit": r.delta_limit,
                    "delta_modified": r.delta_modified,
                    "delta_nkss": r.delta_nkss,
                    "delta_hr": r.delta_hr,
                    "best_subset": sorted(r.best_subset) if r.best_subset is not None else None,
                }
                for r in self.rows
            ],
            "eps_satisfying": sorted(self.eps_satisfying),
            "delta": self.delta,
            "classification": self.classification,
            "eps_tilde": self.eps_tilde,
            "n": self.n,
            "config": {
                "lam": self.config.lam,
                "eps": self.config.eps,
                "q": self.config.q,
                "c": "infinity" if self.config.c == math.inf else int(self.config.c),
                "bisection_tol": self.config.bisection_tol,
            },
        }

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, frozenset):
                return ";".join(str(a) for a in sorted(v))
            return repr(v)

        lines = ["arm,delta_ours,delta_limit,delta_modified,delta_nkss,delta_hr,best_subset"]
        for r in self.rows:
            lines.append(
                ",".join(
                    [
                        str(r.arm),
                        fmt(r.delta_ours),
                        fmt(r.delta_limit),
                        fmt(r.delta_modified),
                        fmt(r.delta_nkss),
                        fmt(r.delta_hr),
                        fmt(r.best_subset),
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def gap_report(inst: Instance, cfg: GapConfig) -> GapReport:
    """All five gap notions for every arm, plus the instance-level gap."""
    cfg._check(inst)
    sat = satisfying_set(inst, cfg.eps).members
    cfg_limit = dataclasses.replace(cfg, c=math.inf)
    variants = {
        "ours": (cfg, False),
        "limit": (cfg_limit, False),
        "modified": (cfg, True),
    }
    nonsat_cache = {
        name: {
            a: gap_nonsatisfying(inst, a, vcfg, modified=mod)
            for a in range(1, inst.K + 1)
            if a not in sat
        }
        for name, (vcfg, mod) in variants.items()
    }
    try:
        nkss = {k: gap_nkss(inst, k, cfg.q, cfg.bisection_tol) for k in range(1, inst.K + 1)}
        hr = {k: gap_hr(inst, k, cfg.q, cfg.bisection_tol) for k in range(1, inst.K + 1)}
    except ValueError:
        nkss = {k: None for k in range(1, inst.K + 1)}
        hr = dict(nkss)
    rows = []
    for k in range(1, inst.K + 1):
        vals = {}
        subset = None
        for name, (vcfg, mod) in variants.items():
            if k in sat:
                v, s = gap_satisfying(inst, k, vcfg, nonsat_cache[name], modified=mod)
                vals[name] = v
                if name == "ours":
                    subset = s
            else:
                vals[name] = nonsat_cache[name][k]
        rows.append(
            GapRow(
                arm=k,
                delta_ours=vals["ours"],
                delta_limit=vals["limit"],
                delta_modified=vals["modified"],
                delta_nkss=nkss[k],
                delta_hr=hr[k],
                best_subset=subset,
            )
        )
    delta = max(r.delta_ours for r in rows if r.arm in sat)
    return GapReport(
        rows=tuple(rows),
        eps_satisfying=sat,
        delta=delta,
        classification="positive_gap" if delta > cfg.bisection_tol else "zero_gap",
        eps_tilde=cfg.step,
        n=cfg.n,
        config=cfg,
    )


def instance_gap(inst: Instance, cfg: GapConfig) -> float:
    """Max gap over the satisfying arms (the instance-level hardness scale)."""
    cfg._check(inst)
    sat = satisfying_set(inst, cfg.eps).members
    nonsat = {
        a: gap_nonsatisfying(inst, a, cfg) for a in range(1, inst.K + 1) if a not in sat
    }
    return max(gap_satisfying(inst, k, cfg, nonsat)[0] for k in sorted(sat))


def classify_instance(inst: Instance, cfg: GapConfig) -> str:
    """positive_gap when the instance gap clears the bisection tolerance."""
    return "positive_gap" if instance_gap(inst, cfg) > cfg.bisection_tol else "zero_gap"
