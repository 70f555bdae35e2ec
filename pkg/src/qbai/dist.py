"""Reward distributions, instances, and hard-instance generators.

Every supported family lowers onto one exact piecewise representation of its
CDF (knot positions plus left/right CDF values at each knot, linear in
between), so CDFs and both quantile functions are evaluated in closed form.
That exactness is what the gap solvers and the post-hoc correctness judge
lean on.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "RewardDistribution",
    "Instance",
    "SatisfyingSet",
    "dirac_uniform_mixture",
    "deterministic",
    "discrete",
    "uniform",
    "piecewise",
    "mixture_quantile",
    "lower_bound_eps_max",
    "satisfying_set",
    "clip",
    "perturb",
    "make_lower_bound_instance",
    "make_near_tie_instance",
    "make_heavy_top_instance",
    "load_instance",
    "save_instance",
]

_SNAP = 1e-12


class _PiecewiseCdf:
    """Exact CDF given by knots ``xs`` with left/right values ``fl``/``fr``.

    F(x) = 0 left of xs[0], fr[i] at xs[i], linear from (xs[i], fr[i]) to
    (xs[i+1], fl[i+1]) between knots, 1 from xs[-1] on. Atoms are the jumps
    fr[i] - fl[i].
    """

    def __init__(self, xs, fl, fr):
        xs = np.asarray(xs, dtype=float)
        fl = np.asarray(fl, dtype=float)
        fr = np.asarray(fr, dtype=float)
        if xs.ndim != 1 or len(xs) == 0 or len(fl) != len(xs) or len(fr) != len(xs):
            raise ValueError("knot arrays must be 1-d and of equal length")
        if not np.all(np.isfinite(xs)):
            raise ValueError("knot positions must be finite")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("knot positions must be strictly increasing")
        interleaved = np.empty(2 * len(xs))
        interleaved[0::2] = fl
        interleaved[1::2] = fr
        if np.any(np.diff(interleaved) < -_SNAP):
            raise ValueError("CDF values must be non-decreasing")
        if abs(fl[0]) > _SNAP:
            raise ValueError("CDF must start at 0 at the first knot")
        if abs(fr[-1] - 1.0) > 1e-9:
            raise ValueError("CDF must reach 1 at the last knot")
        fl = np.maximum.accumulate(np.clip(fl, 0.0, 1.0))
        fr = np.clip(np.maximum(fr, fl), 0.0, 1.0)
        fl[0] = 0.0
        fr[-1] = 1.0
        self.xs = xs
        self.fl = fl
        self.fr = fr

    # -- evaluation -------------------------------------------------------

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.xs, x, side="right") - 1
        lo = idx < 0
        hi = idx >= len(self.xs) - 1
        mid = ~(lo | hi)
        out = np.empty(x.shape)
        out[lo] = 0.0
        out[hi] = 1.0  # searchsorted puts x >= xs[-1] (and +inf) here
        i = idx[mid]  # mid is empty for single-knot laws, so i+1 stays in range
        t = (x[mid] - self.xs[i]) / (self.xs[i + 1] - self.xs[i])
        out[mid] = self.fr[i] + t * (self.fl[i + 1] - self.fr[i])
        return out

    def cdf_left(self, x):
        """F(x-), the left limit of the CDF."""
        x = np.asarray(x, dtype=float)
        out = self.cdf(x)
        pos = np.searchsorted(self.xs, x, side="left")
        at_knot = (pos < len(self.xs)) & (self.xs[np.minimum(pos, len(self.xs) - 1)] == x)
        out = np.where(at_knot, self.fl[np.minimum(pos, len(self.xs) - 1)], out)
        return out

    def lower_quantile(self, p):
        """inf{x : F(x) >= p} for p in (0, 1]."""
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0.0) | (p > 1.0)):
            raise ValueError("lower quantile needs p in (0, 1]")
        i = np.searchsorted(self.fr, p, side="left")
        i = np.minimum(i, len(self.xs) - 1)
        im1 = np.maximum(i - 1, 0)
        interp = (i > 0) & (self.fl[i] >= p)
        denom = self.fl[i] - self.fr[im1]
        t = np.where(interp, (p - self.fr[im1]) / np.where(denom > 0, denom, 1.0), 0.0)
        out = np.where(interp, self.xs[im1] + t * (self.xs[i] - self.xs[im1]), self.xs[i])
        return out

    def upper_quantile(self, p):
        """sup{x : F(x) <= p} for p in [0, 1)."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0.0) | (p >= 1.0)):
            raise ValueError("upper quantile needs p in [0, 1)")
        j = np.searchsorted(self.fl, p, side="right")
        i = np.maximum(j - 1, 0)
        ip1 = np.minimum(i + 1, len(self.xs) - 1)
        interp = self.fr[i] <= p
        denom = self.fl[ip1] - self.fr[i]
        t = np.where(interp, (p - self.fr[i]) / np.where(denom > 0, denom, 1.0), 0.0)
        out = np.where(interp, self.xs[i] + t * (self.xs[ip1] - self.xs[i]), self.xs[i])
        return out

    def atoms(self):
        jumps = self.fr - self.fl
        return [(float(x), float(m)) for x, m in zip(self.xs, jumps) if m > _SNAP]


@dataclass(frozen=True)
class RewardDistribution:
    """An arm's reward law: one of the supported families.

    Use the module-level constructors (``dirac_uniform_mixture``,
    ``deterministic``, ``discrete``, ``uniform``, ``piecewise``) rather than
    instantiating directly. Exposes the CDF, both quantile functions, and
    inverse-CDF sampling.
    """

    family: str
    args: tuple

    @cached_property
    def _pc(self) -> _PiecewiseCdf:
        return _build_piecewise(self.family, self.args)

    # scalar-in, scalar-out wrappers; arrays pass through vectorized

    def cdf(self, x):
        if np.isscalar(x):
            if math.isnan(x):
                raise ValueError("cdf of NaN")
            if math.isinf(x):
                return 0.0 if x < 0 else 1.0
            return float(self._pc.cdf(x))
        return self._pc.cdf(x)

    def cdf_left(self, x):
        if np.isscalar(x):
            if math.isinf(x):
                return 0.0 if x < 0 else 1.0
            return float(self._pc.cdf_left(x))
        return self._pc.cdf_left(x)

    def lower_quantile(self, p):
        if np.isscalar(p):
            return float(self._pc.lower_quantile(p))
        return self._pc.lower_quantile(p)

    def upper_quantile(self, p):
        if np.isscalar(p):
            return float(self._pc.upper_quantile(p))
        return self._pc.upper_quantile(p)

    def sample(self, u):
        """Inverse-CDF draw from uniforms ``u`` in (0, 1)."""
        return self.lower_quantile(u)

    def support(self) -> tuple[float, float]:
        return float(self._pc.xs[0]), float(self._pc.xs[-1])

    def to_dict(self) -> dict:
        if self.family == "dirac_uniform_mixture":
            return {"family": self.family, "w": self.args[0]}
        if self.family == "deterministic":
            return {"family": self.family, "r": self.args[0]}
        if self.family == "discrete":
            return {"family": self.family, "support": [list(p) for p in self.args[0]]}
        if self.family == "uniform":
            return {"family": self.family, "a": self.args[0], "b": self.args[1]}
        if self.family == "piecewise":
            return {
                "family": self.family,
                "knots": [list(p) for p in self.args[0]],
                "atoms": [list(p) for p in self.args[1]],
            }
        raise ValueError(f"unknown family {self.family!r}")


def _build_piecewise(family: str, args: tuple) -> _PiecewiseCdf:
    if family == "dirac_uniform_mixture":
        (w,) = args
        return _PiecewiseCdf([0.0, 1.0], [0.0, 1.0], [w, 1.0])
    if family == "deterministic":
        (r,) = args
        return _PiecewiseCdf([r], [0.0], [1.0])
    if family == "discrete":
        (support,) = args
        vals = np.array([v for v, _ in support], dtype=float)
        mass = np.array([m for _, m in support], dtype=float)
        cum = np.cumsum(mass)
        return _PiecewiseCdf(vals, cum - mass, cum)
    if family == "uniform":
        a, b = args
        return _PiecewiseCdf([a, b], [0.0, 1.0], [0.0, 1.0])
    if family == "piecewise":
        knots, atoms = args
        xs = np.array([x for x, _ in knots], dtype=float)
        fr = np.array([f for _, f in knots], dtype=float)
        fl = fr.copy()
        amap = {x: m for x, m in atoms}
        for i, x in enumerate(xs):
            fl[i] = fr[i] - amap.pop(x, 0.0)
        if amap:
            raise ValueError("atom positions must coincide with knots")
        return _PiecewiseCdf(xs, fl, fr)
    raise ValueError(f"unknown family {family!r}")


# -- family constructors --------------------------------------------------


def dirac_uniform_mixture(w: float) -> RewardDistribution:
    """Point mass ``w`` at 0 mixed with Uniform[0, 1] at weight 1 - w."""
    if not 0.0 <= w < 1.0:
        raise ValueError("mixture weight must be in [0, 1)")
    d = RewardDistribution("dirac_uniform_mixture", (float(w),))
    d._pc  # validate eagerly
    return d


def deterministic(r: float) -> RewardDistribution:
    if not math.isfinite(r):
        raise ValueError("point mass must be finite")
    d = RewardDistribution("deterministic", (float(r),))
    d._pc
    return d


def discrete(support) -> RewardDistribution:
    """Finite-support law from (value, mass) pairs; masses must sum to 1."""
    pairs = sorted((float(v), float(m)) for v, m in support)
    if not pairs:
        raise ValueError("empty support")
    vals = [v for v, _ in pairs]
    if len(set(vals)) != len(vals):
        raise ValueError("duplicate support points")
    if any(m <= 0 for _, m in pairs):
        raise ValueError("masses must be positive")
    if abs(sum(m for _, m in pairs) - 1.0) > 1e-9:
        raise ValueError("masses must sum to 1")
    d = RewardDistribution("discrete", (tuple(pairs),))
    d._pc
    return d


def uniform(a: float, b: float) -> RewardDistribution:
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise ValueError("need finite a < b")
    d = RewardDistribution("uniform", (float(a), float(b)))
    d._pc
    return d


def piecewise(knots, atoms=()) -> RewardDistribution:
    """General monotone piecewise-linear CDF with optional atoms.

    Parameters
    ----------
    knots : iterable of (x, F(x)) pairs, the right-continuous CDF values.
    atoms : iterable of (x, mass) pairs; each x must be a knot position.
    """
    kn = tuple((float(x), float(f)) for x, f in knots)
    at = tuple((float(x), float(m)) for x, m in atoms)
    d = RewardDistribution("piecewise", (kn, at))
    d._pc
    return d


def _from_arrays(xs, fl, fr) -> RewardDistribution:
    """Wrap raw knot arrays as a piecewise-family distribution."""
    pc = _PiecewiseCdf(xs, fl, fr)
    knots = tuple((float(x), float(f)) for x, f in zip(pc.xs, pc.fr))
    atoms = tuple(
        (float(x), float(j))
        for x, j in zip(pc.xs, pc.fr - pc.fl)
        if j > _SNAP
    )
    return RewardDistribution("piecewise", (knots, atoms))


# -- instances -------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    """An ordered tuple of arms together with the target quantile level and cap.

    Validates on construction that every arm's q-quantile lies in
    [0, lam] (class membership), q in (0, 1), lam > 0.
    """

    arms: tuple[RewardDistribution, ...]
    q: float
    lam: float

    def __post_init__(self):
        if len(self.arms) < 1:
            raise ValueError("instance needs at least one arm")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must be in (0, 1)")
        if not self.lam > 0.0:
            raise ValueError("lambda must be positive")
        for i, arm in enumerate(self.arms, start=1):
            v = arm.lower_quantile(self.q)
            if not 0.0 <= v <= self.lam:
                raise ValueError(
                    f"arm {i} has q-quantile {v} outside [0, {self.lam}]"
                )

    @property
    def K(self) -> int:
        return len(self.arms)

    def quantiles(self) -> np.ndarray:
        """The arms' q-quantiles, in arm order."""
        return np.array([a.lower_quantile(self.q) for a in self.arms])

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "lambda": self.lam,
            "arms": [a.to_dict() for a in self.arms],
        }


@dataclass(frozen=True)
class SatisfyingSet:
    eps: float
    members: frozenset[int]


def satisfying_set(inst: Instance, eps: float) -> SatisfyingSet:
    """Arms whose q-quantile is within ``eps`` of the best arm's (1-indexed)."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    qs = inst.quantiles()
    best = qs.max()
    members = frozenset(int(k) + 1 for k in np.nonzero(qs >= best - eps)[0])
    return SatisfyingSet(eps=float(eps), members=members)


# -- closed forms -----------------------------------------------------------


def mixture_quantile(w: float, p: float) -> float:
    """Lower quantile of the dirac/uniform mixture: (p - w)/(1 - w), 0 on the atom."""
    if not (0.0 <= w < 1.0 and 0.0 < p < 1.0):
        raise ValueError("need 0 <= w < 1 and 0 < p < 1")
    if p <= w:
        return 0.0
    return (p - w) / (1.0 - w)


def lower_bound_eps_max(q: float, gamma: float) -> float:
    """Largest relaxation for which only arm 1 of the hard family satisfies.

    Equals half the closed-form quantile difference between the best arm and
    the others; valid for q > 1/3 (above both atoms).
    """
    if not 1.0 / 3.0 < q < 1.0:
        raise ValueError("closed form needs q in (1/3, 1)")
    if not 0.0 < gamma <= 1.0 / 6.0:
        raise ValueError("gamma must be in (0, 1/6]")
    return (1.0 - q) * gamma / (2.0 * (2.0 / 3.0 + gamma) * (2.0 / 3.0))


# -- instance surgery -------------------------------------------------------


def _clip_arm(arm: RewardDistribution, lam: float) -> RewardDistribution:
    pc = arm._pc
    lo_clip = pc.xs[0] < 0.0
    hi_clip = pc.xs[-1] > lam
    if not lo_clip and not hi_clip:
        return arm
    xs, fl, fr = [], [], []
    if lo_clip:
        xs.append(0.0)
        fl.append(0.0)
        fr.append(float(pc.cdf(0.0)))
    lo_edge = 0.0 if lo_clip else -math.inf
    hi_edge = lam if hi_clip else math.inf
    for x, a, b in zip(pc.xs, pc.fl, pc.fr):
        if lo_edge < x < hi_edge:
            xs.append(float(x))
            fl.append(float(a))
            fr.append(float(b))
    if hi_clip:
        xs.append(lam)
        fl.append(float(pc.cdf_left(lam)))
        fr.append(1.0)
    return _from_arrays(xs, fl, fr)


def clip(inst: Instance) -> Instance:
    """Move each arm's mass below 0 to 0 and above lambda to lambda."""
    arms = tuple(_clip_arm(a, inst.lam) for a in inst.arms)
    if all(a is b for a, b in zip(arms, inst.arms)):
        return inst
    return Instance(arms=arms, q=inst.q, lam=inst.lam)


def _rebuild(cands, g_left, g_right) -> RewardDistribution:
    xs = np.unique(np.asarray(cands, dtype=float))
    gl = np.array([g_left(x) for x in xs])
    gr = np.array([g_right(x) for x in xs])
    # drop flat-zero lead-in and flat-one tail points
    keep = np.ones(len(xs), dtype=bool)
    for i in range(len(xs) - 1):
        if gr[i] <= _SNAP and gl[i + 1] <= _SNAP:
            keep[i] = False
    for i in range(len(xs) - 1, 0, -1):
        if gl[i] >= 1.0 - _SNAP and gr[i - 1] >= 1.0 - _SNAP:
            keep[i] = False
    return _from_arrays(xs[keep], gl[keep], gr[keep])


def _promote_arm(arm, q, eta, lam):
    pc = arm._pc
    target_p = q + 2.0 * eta
    src_mass = arm.cdf_left(arm.lower_quantile(q))
    if src_mass < eta - _SNAP:
        raise ValueError("insufficient mass below the q-quantile to move")
    z = arm.lower_quantile(target_p)
    if not 0.0 <= z <= lam:
        raise ValueError(f"target quantile {z} outside [0, {lam}]")
    cut = arm.lower_quantile(eta)

    def g_right(x):
        return max(arm.cdf(x) - eta, 0.0) + (eta if x >= z else 0.0)

    def g_left(x):
        return max(arm.cdf_left(x) - eta, 0.0) + (eta if x > z else 0.0)

    return _rebuild(list(pc.xs) + [cut, z], g_left, g_right)


def _demote_arm(arm, q, eta, lam):
    pc = arm._pc
    qk = arm.lower_quantile(q)
    f_qk = arm.cdf(qk)
    if 1.0 - f_qk < eta - _SNAP:
        raise ValueError("insufficient mass above the q-quantile to move")
    z = arm.lower_quantile(q - 2.0 * eta)
    if not 0.0 <= z <= lam:
        raise ValueError(f"target quantile {z} outside [0, {lam}]")
    flat_end = arm.upper_quantile(f_qk) if f_qk < 1.0 else qk
    donor_end = arm.lower_quantile(min(f_qk + eta, 1.0))

    def clamp(v):
        return min(max(v, 0.0), eta)

    def g_right(x):
        return arm.cdf(x) + (eta if x >= z else 0.0) - clamp(arm.cdf(x) - f_qk)

    def g_left(x):
        return arm.cdf_left(x) + (eta if x > z else 0.0) - clamp(arm.cdf_left(x) - f_qk)

    return _rebuild(list(pc.xs) + [z, flat_end, donor_end], g_left, g_right)


def perturb(inst: Instance, k: int, a: int, eta: float) -> Instance:
    """Demote arm ``k`` and promote arm ``a`` by moving ``eta`` mass in each.

    Arm ``a`` has eta mass taken from the lowest part of its law and placed
    at its (q + 2 eta)-quantile; arm ``k`` has eta mass taken from just above
    its q-quantile and placed at its (q - 2 eta)-quantile. The new q-quantiles
    are the old (q + eta)- and (q - eta)-quantiles respectively.
    """
    K = inst.K
    if not (1 <= k <= K and 1 <= a <= K):
        raise ValueError("arm index out of range")
    if k == a:
        raise ValueError("perturbed arms must differ")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if eta == 0:
        return inst
    if not (inst.q - 2.0 * eta > 0.0 and inst.q + 2.0 * eta < 1.0):
        raise ValueError("eta too large for the quantile level")
    arms = list(inst.arms)
    arms[a - 1] = _promote_arm(inst.arms[a - 1], inst.q, eta, inst.lam)
    arms[k - 1] = _demote_arm(inst.arms[k - 1], inst.q, eta, inst.lam)
    return Instance(arms=tuple(arms), q=inst.q, lam=inst.lam)


# -- generators -------------------------------------------------------------


def make_lower_bound_instance(
    K: int, gamma: float, j: int | None = None, q: float = 0.5
) -> Instance:
    """The hard mixture family: arm 1 is g_{1/3-gamma}, the rest g_{1/3}.

    With ``j`` given (2..K), arm j becomes g_{1/3-2*gamma}, which swaps the
    identity of the best arm.
    """
    if K < 2:
        raise ValueError("need at least two arms")
    if not 0.0 < gamma <= 1.0 / 6.0:
        raise ValueError("gamma must be in (0, 1/6]")
    if j is not None and not 2 <= j <= K:
        raise ValueError("j must be in {2..K} (or None)")
    arms = [dirac_uniform_mixture(1.0 / 3.0)] * K
    arms[0] = dirac_uniform_mixture(1.0 / 3.0 - gamma)
    if j is not None:
        arms[j - 1] = dirac_uniform_mixture(1.0 / 3.0 - 2.0 * gamma)
    return Instance(arms=tuple(arms), q=q, lam=1.0)


def make_near_tie_instance(m1: float, m2: float, eps: float) -> Instance:
    """Two nearly tied arms: uniform on [0, 2*m1] vs {m2, 2*m1} at half mass.

    Both arms are eps-satisfying at q = 1/2 while classical gap notions
    vanish; requires m2 in (m1 - eps/2, m1).
    """
    if not (m1 > 0 and eps > 0):
        raise ValueError("m1 and eps must be positive")
    if not m1 - eps / 2.0 < m2 < m1:
        raise ValueError("m2 must lie in (m1 - eps/2, m1)")
    if eps > m1:
        raise ValueError("cap 2*m1 must be at least 2*eps")
    return Instance(
        arms=(uniform(0.0, 2.0 * m1), discrete([(m2, 0.5), (2.0 * m1, 0.5)])),
        q=0.5,
        lam=2.0 * m1,
    )


def make_heavy_top_instance(lam: float, eps: float) -> Instance:
    """Two identical two-point arms with half their mass above the cap."""
    if not (eps > 0 and lam >= 2.0 * eps):
        raise ValueError("need lam >= 2*eps > 0")
    arm = discrete([(lam - eps / 3.0, 0.5), (2.0 * lam, 0.5)])
    return Instance(arms=(arm, arm), q=0.5, lam=lam)


# -- serialization ----------------------------------------------------------

_CONSTRUCTORS = {
    "dirac_uniform_mixture": lambda d: dirac_uniform_mixture(d["w"]),
    "deterministic": lambda d: deterministic(d["r"]),
    "discrete": lambda d: discrete(d["support"]),
    "uniform": lambda d: uniform(d["a"], d["b"]),
    "piecewise": lambda d: piecewise(d["knots"], d.get("atoms", ())),
}


def arm_from_dict(d: dict) -> RewardDistribution:
    fam = d.get("family")
    if fam not in _CONSTRUCTORS:
        raise ValueError(f"unknown family {fam!r}")
    return _CONSTRUCTORS[fam](d)


def instance_from_dict(d: dict) -> Instance:
    return Instance(
        arms=tuple(arm_from_dict(a) for a in d["arms"]),
        q=float(d["q"]),
        lam=float(d["lambda"]),
    )


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial output."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_instance(inst: Instance, path: str) -> None:
    atomic_write_text(path, json.dumps(inst.to_dict(), indent=2, sort_keys=True) + "\n")


def load_instance(path: str) -> Instance:
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    return instance_from_dict(d)
