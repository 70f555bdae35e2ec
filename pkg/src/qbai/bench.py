"""Seeded Monte-Carlo studies and the command-line interface.

Verbs: ``gaps`` (per-arm gap report), ``run`` (reliability study),
``scaling`` (gamma or resolution sweeps), ``quantest-verify`` (estimation
success matrix), ``make-instance`` (generator front end). All file output is
atomic; CSV bytes are reproducible for a fixed (instance, config, base_seed)
regardless of worker count. Set QBAI_LOG=DEBUG for progress logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import multiprocessing
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .channel import ThresholdChannel
from .dist import (
    Instance,
    RewardDistribution,
    atomic_write_text,
    clip,
    deterministic,
    dirac_uniform_mixture,
    discrete,
    load_instance,
    lower_bound_eps_max,
    make_heavy_top_instance,
    make_lower_bound_instance,
    make_near_tie_instance,
    perturb,
    satisfying_set,
    save_instance,
    uniform,
)
from .engine import AlgoConfig, RunResult, run
from .gaps import GapConfig, choose_c, gap_report
from .quantest import MnbsParams, quant_est, quant_est_naive, step_budget, verify_interval

__all__ = [
    "ExperimentSpec",
    "TrialRow",
    "StudyReport",
    "ScalingReport",
    "QuantestRow",
    "QuantestReport",
    "wilson_interval",
    "run_study",
    "scaling_study",
    "resolution_study",
    "quantest_verify",
    "main",
]

log = logging.getLogger("qbai")

_WILSON_Z = 1.959963984540054  # two-sided 95%


def wilson_interval(successes: int, n: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class ExperimentSpec:
    """One reliability study: an instance, a config, and a seed range."""

    instance: Instance
    config: AlgoConfig
    trials: int
    base_seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class TrialRow:
    seed: int
    returned_arm: int | None
    correct: int
    total_pulls: int
    sentinel_queries: int
    rounds: int
    pulls_per_arm: tuple[int, ...]


@dataclass
class StudyReport:
    rows: list[TrialRow]
    instance: Instance
    config: AlgoConfig
    base_seed: int
    wall_time_s: float
    results: list[RunResult] | None = None

    @property
    def trials(self) -> int:
        return len(self.rows)

    @property
    def successes(self) -> int:
        return sum(r.correct for r in self.rows)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def csv_text(self) -> str:
        K = self.instance.K
        header = "seed,returned_arm,correct,total_pulls,sentinel_queries,rounds," + ",".join(
            f"pulls_arm_{k}" for k in range(1, K + 1)
        )
        lines = [header]
        for r in self.rows:
            ret = "" if r.returned_arm is None else str(r.returned_arm)
            lines.append(
                f"{r.seed},{ret},{r.correct},{r.total_pulls},{r.sentinel_queries},{r.rounds},"
                + ",".join(str(p) for p in r.pulls_per_arm)
            )
        return "\n".join(lines) + "\n"

    def json_summary(self) -> dict:
        pulls = np.array([r.total_pulls for r in self.rows], dtype=float)
        lo, hi = wilson_interval(self.successes, self.trials)
        return {
            "version": __version__,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "success_rate": self.success_rate,
            "wilson_low": lo,
            "wilson_high": hi,
            "terminated": sum(1 for r in self.rows if r.returned_arm is not None),
            "median_pulls": float(np.median(pulls)),
            "mean_pulls": float(pulls.mean()),
            "p25_pulls": float(np.percentile(pulls, 25)),
            "p75_pulls": float(np.percentile(pulls, 75)),
            "mean_rounds": float(np.mean([r.rounds for r in self.rows])),
            "eps_satisfying": sorted(satisfying_set(self.instance, self.config.eps).members),
            "config": _config_dict(self.config),
            "instance": self.instance.to_dict(),
            "wall_time_s": self.wall_time_s,
        }


def _config_dict(cfg: AlgoConfig) -> dict:
    return {
        "lam": cfg.lam,
        "eps": cfg.eps,
        "q": cfg.q,
        "delta": cfg.delta,
        "c": cfg.c,
        "max_rounds": cfg.max_rounds,
        "kappa": cfg.kappa,
        "loop_constant": cfg.loop_constant,
    }


def _one_trial(args: tuple[Instance, AlgoConfig, int]) -> RunResult:
    inst, cfg, seed = args
    return run(ThresholdChannel(inst, seed), cfg)


def run_study(
    inst: Instance,
    cfg: AlgoConfig,
    trials: int,
    base_seed: int,
    jobs: int | None = None,
    keep_results: bool = False,
) -> StudyReport:
    """Run seeded trials (seed = base_seed + i) and judge them analytically."""
    spec = ExperimentSpec(instance=inst, config=cfg, trials=trials, base_seed=base_seed)
    sat = satisfying_set(inst, cfg.eps).members
    if jobs is None:
        jobs = os.cpu_count() or 1
    tasks = [(inst, cfg, base_seed + i) for i in range(trials)]
    t0 = time.monotonic()
    if jobs <= 1 or trials == 1:
        results = [_one_trial(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        chunk = max(1, trials // (jobs * 4))
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            results = list(pool.map(_one_trial, tasks, chunksize=chunk))
    wall = time.monotonic() - t0
    rows = []
    for (_, _, seed), res in zip(tasks, results):
        correct = int(res.terminated and res.returned_arm in sat)
        rows.append(
            TrialRow(
                seed=seed,
                returned_arm=res.returned_arm if res.terminated else None,
                correct=correct,
                total_pulls=res.ledger.total_pulls,
                sentinel_queries=res.ledger.sentinel_queries,
                rounds=len(res.rounds),
                pulls_per_arm=tuple(res.ledger.pulls_per_arm),
            )
        )
    log.info("study done: %d trials, success %.3f, %.1fs", trials, sum(r.correct for r in rows) / trials, wall)
    return StudyReport(
        rows=rows,
        instance=inst,
        config=cfg,
        base_seed=spec.base_seed,
        wall_time_s=wall,
        results=results if keep_results else None,
    )


# -- sweeps -----------------------------------------------------------------


@dataclass
class ScalingReport:
    """Median pulls across a sweep, with adjacent ratios (or differences)."""

    labels: list[str]
    params: list[dict]
    medians: list[float]
    ratios: list[float]
    studies: list[StudyReport]
    best_arm_never_pulled_more: float

    def json_summary(self) -> dict:
        return {
            "version": __version__,
            "labels": self.labels,
            "params": self.params,
            "median_pulls": self.medians,
            "adjacent_ratios": self.ratios,
            "best_arm_never_pulled_more": self.best_arm_never_pulled_more,
            "studies": [s.json_summary() for s in self.studies],
        }


def _best_le_worst_fraction(studies: list[StudyReport]) -> float:
    """Fraction of trials where arm 1 took no more pulls than the max arm."""
    total = 0
    good = 0
    for s in studies:
        for r in s.rows:
            total += 1
            good += int(r.pulls_per_arm[0] <= max(r.pulls_per_arm))
    return good / total if total else 1.0


def scaling_study(
    gammas,
    trials: int,
    base_seed: int,
    K: int = 3,
    q: float = 0.5,
    delta: float = 0.05,
    c: int = 2,
    jobs: int | None = None,
    keep_results: bool = False,
) -> ScalingReport:
    """Hard-family sweep: eps tracks the per-gamma separation bound."""
    studies = []
    params = []
    for gamma in gammas:
        inst = make_lower_bound_instance(K, gamma, q=q)
        eps = lower_bound_eps_max(q, gamma)
        cfg = AlgoConfig(lam=1.0, eps=eps, q=q, delta=delta, c=c)
        log.info("scaling: gamma=%g eps=%g", gamma, eps)
        studies.append(run_study(inst, cfg, trials, base_seed, jobs, keep_results))
        params.append({"gamma": gamma, "eps": eps, "K": K, "q": q, "delta": delta, "c": c})
    medians = [float(np.median([r.total_pulls for r in s.rows])) for s in studies]
    ratios = [medians[i + 1] / medians[i] for i in range(len(medians) - 1)]
    return ScalingReport(
        labels=[f"gamma={g}" for g in gammas],
        params=params,
        medians=medians,
        ratios=ratios,
        studies=studies,
        best_arm_never_pulled_more=_best_le_worst_fraction(studies),
    )


def resolution_study(
    ratios,
    trials: int,
    base_seed: int,
    r_low: float = 0.2,
    r_high: float = 0.8,
    q: float = 0.5,
    delta: float = 0.1,
    c: int = 1,
    jobs: int | None = None,
    keep_results: bool = False,
) -> ScalingReport:
    """Deterministic two-arm sweep over lambda/eps; pulls grow with log(n)."""
    studies = []
    params = []
    for ratio in ratios:
        inst = Instance(arms=(deterministic(r_low), deterministic(r_high)), q=q, lam=1.0)
        cfg = AlgoConfig(lam=1.0, eps=1.0 / ratio, q=q, delta=delta, c=c)
        studies.append(run_study(inst, cfg, trials, base_seed, jobs, keep_results))
        params.append({"lam_over_eps": ratio, "delta": delta, "c": c})
    medians = [float(np.median([r.total_pulls for r in s.rows])) for s in studies]
    ratios_out = [medians[i + 1] / medians[i] for i in range(len(medians) - 1)]
    return ScalingReport(
        labels=[f"lam_over_eps={r}" for r in ratios],
        params=params,
        medians=medians,
        ratios=ratios_out,
        studies=studies,
        best_arm_never_pulled_more=_best_le_worst_fraction(studies),
    )


# -- estimation verification --------------------------------------------------


@dataclass(frozen=True)
class QuantestRow:
    label: str
    dist: RewardDistribution
    tau: float
    delta_relax: float
    delta_fail: float = 0.1
    adaptive_stop: bool = False


def default_quantest_matrix() -> list[QuantestRow]:
    step_arm = discrete([(0.3, 0.5), (0.7, 0.5)])
    return [
        QuantestRow("uniform_mid", uniform(0.0, 1.0), 0.5, 0.1),
        QuantestRow("mixture_third", dirac_uniform_mixture(1.0 / 3.0), 0.5, 0.1),
        QuantestRow("step_low_tau", step_arm, 0.3, 0.05),
        QuantestRow("point_mass", deterministic(0.4), 0.5, 0.1),
        QuantestRow("uniform_high_tau", uniform(0.2, 0.9), 0.7, 0.05),
        QuantestRow("mixture_heavy_atom", dirac_uniform_mixture(0.6), 0.7, 0.05),
        QuantestRow("uniform_mid_stop", uniform(0.0, 1.0), 0.5, 0.1, adaptive_stop=True),
        QuantestRow("step_low_tau_stop", step_arm, 0.3, 0.05, adaptive_stop=True),
    ]


@dataclass
class QuantestReport:
    rows: list[dict]
    runs: int
    base_seed: int
    grid: list[float]
    wall_time_s: float

    def json_summary(self) -> dict:
        return {
            "version": __version__,
            "runs": self.runs,
            "base_seed": self.base_seed,
            "grid": self.grid,
            "rows": self.rows,
            "wall_time_s": self.wall_time_s,
        }

    def csv_text(self) -> str:
        header = (
            "label,tau,delta_relax,delta_fail,adaptive_stop,success_rate,success_rate_naive,"
            "t_max,max_queries,mean_queries,budget_ok,naive_budget,max_queries_naive"
        )
        lines = [header]
        for r in self.rows:
            lines.append(
                ",".join(
                    str(r[k])
                    for k in (
                        "label",
                        "tau",
                        "delta_relax",
                        "delta_fail",
                        "adaptive_stop",
                        "success_rate",
                        "success_rate_naive",
                        "t_max",
                        "max_queries",
                        "mean_queries",
                        "budget_ok",
                        "naive_budget",
                        "max_queries_naive",
                    )
                )
            )
        return "\n".join(lines) + "\n"


def quantest_verify(
    runs: int = 1000,
    base_seed: int = 0,
    matrix: list[QuantestRow] | None = None,
    grid_points: int = 33,
) -> QuantestReport:
    """Measure estimation success rates against the analytic-CDF judge."""
    if matrix is None:
        matrix = default_quantest_matrix()
    xs = np.concatenate(([-math.inf], np.linspace(0.0, 1.0, grid_points), [math.inf]))
    m = len(xs) - 1
    t0 = time.monotonic()
    out = []
    for row in matrix:
        inst = Instance(arms=(row.dist,), q=row.tau, lam=1.0)
        stop = (1.0 - row.delta_fail / 4.0) if row.adaptive_stop else None
        params = MnbsParams(
            tau=row.tau,
            delta_relax=row.delta_relax,
            delta_fail=row.delta_fail,
            stop_mass=stop,
        )
        t_max = step_budget(m, params)
        n_reps = math.ceil(
            2.0 * row.delta_relax**-2 * math.log(2.0 * math.log2(m) / row.delta_fail)
        )
        naive_budget = n_reps * math.ceil(math.log2(m))
        ok = ok_naive = 0
        total_q = 0
        max_q = 0
        max_q_naive = 0
        budget_ok = 0
        for i in range(runs):
            ch = ThresholdChannel(inst, base_seed + i)
            idx = quant_est(ch, 1, xs, params)
            led = ch.snapshot_ledger()
            queries = led.total_pulls + led.sentinel_queries
            ok += int(verify_interval(row.dist, xs, idx, row.tau, row.delta_relax))
            budget_ok += int(queries <= t_max)
            total_q += queries
            max_q = max(max_q, queries)
            ch2 = ThresholdChannel(inst, base_seed + i)
            idx2 = quant_est_naive(ch2, 1, xs, params)
            led2 = ch2.snapshot_ledger()
            ok_naive += int(verify_interval(row.dist, xs, idx2, row.tau, row.delta_relax))
            max_q_naive = max(max_q_naive, led2.total_pulls + led2.sentinel_queries)
        out.append(
            {
                "label": row.label,
                "tau": row.tau,
                "delta_relax": row.delta_relax,
                "delta_fail": row.delta_fail,
                "adaptive_stop": row.adaptive_stop,
                "success_rate": ok / runs,
                "success_rate_naive": ok_naive / runs,
                "t_max": t_max,
                "max_queries": max_q,
                "mean_queries": total_q / runs,
                "budget_ok": budget_ok / runs,
                "naive_budget": naive_budget,
                "max_queries_naive": max_q_naive,
            }
        )
        log.info("quantest row %s: success %.3f", row.label, ok / runs)
    return QuantestReport(
        rows=out,
        runs=runs,
        base_seed=base_seed,
        grid=[float(v) for v in xs],
        wall_time_s=time.monotonic() - t0,
    )


# -- CLI ----------------------------------------------------------------------


def _parse_params(text: str) -> dict:
    """Parse 'k=v,k2=v2' with ints and floats inferred."""
    out: dict = {}
    if not text:
        return out
    for part in text.split(","):
        if "=" not in part:
            raise ValueError(f"bad parameter {part!r}; expected key=value")
        key, val = part.split("=", 1)
        try:
            out[key.strip()] = int(val)
        except ValueError:
            try:
                out[key.strip()] = float(val)
            except ValueError:
                out[key.strip()] = val.strip()
    return out


def _resolve_c(args, lam: float, eps: float) -> int:
    if args.c is not None and args.theta is not None:
        raise SystemExit("pass --c or --theta, not both")
    if args.theta is not None:
        return choose_c(args.theta, lam, eps)
    return args.c if args.c is not None else 1


def _write_json(path: str, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_gaps(args) -> int:
    inst = load_instance(args.instance)
    if args.c_str is not None and args.c_str.lower() in ("inf", "infinity"):
        c: float = math.inf
    else:
        c = _resolve_c(args, inst.lam, args.eps)
    cfg = GapConfig(lam=inst.lam, eps=args.eps, q=inst.q, c=c, bisection_tol=args.tol)
    report = gap_report(inst, cfg)
    if args.out:
        _write_json(args.out + ".json", report.to_dict())
        atomic_write_text(args.out + ".csv", report.to_csv())
    sys.stdout.write(report.to_csv())
    sys.stdout.write(f"# delta={report.delta!r} classification={report.classification}\n")
    return 0


def _load_algo_config(args, inst: Instance) -> AlgoConfig:
    c = _resolve_c(args, inst.lam, args.eps)
    return AlgoConfig(
        lam=inst.lam,
        eps=args.eps,
        q=inst.q,
        delta=args.delta,
        c=c,
        max_rounds=args.max_rounds,
    )


def _cmd_run(args) -> int:
    inst = load_instance(args.instance)
    cfg = _load_algo_config(args, inst)
    report = run_study(inst, cfg, args.trials, args.seed, jobs=args.jobs)
    if args.out:
        atomic_write_text(args.out + ".csv", report.csv_text())
        _write_json(args.out + ".json", report.json_summary())
    lo, hi = wilson_interval(report.successes, report.trials)
    sys.stdout.write(
        f"success_rate={report.success_rate:.4f} wilson=[{lo:.4f},{hi:.4f}] "
        f"median_pulls={np.median([r.total_pulls for r in report.rows]):.0f}\n"
    )
    return 0


def _cmd_scaling(args) -> int:
    if args.sweep == "gamma":
        gammas = [float(g) for g in args.gammas.split(",")]
        report = scaling_study(
            gammas,
            args.trials,
            args.seed,
            K=args.K,
            delta=args.delta,
            c=args.c if args.c is not None else 2,
            jobs=args.jobs,
        )
    else:
        ratios = [float(r) for r in args.ratios.split(",")]
        report = resolution_study(
            ratios,
            args.trials,
            args.seed,
            delta=args.delta,
            c=args.c if args.c is not None else 1,
            jobs=args.jobs,
        )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for label, study in zip(report.labels, report.studies):
            safe = label.replace("=", "_").replace("/", "_")
            atomic_write_text(os.path.join(args.out, f"{safe}.csv"), study.csv_text())
        _write_json(os.path.join(args.out, "summary.json"), report.json_summary())
    for label, med in zip(report.labels, report.medians):
        sys.stdout.write(f"{label}: median_pulls={med:.0f}\n")
    sys.stdout.write(f"adjacent_ratios={[round(r, 3) for r in report.ratios]}\n")
    return 0


def _cmd_quantest_verify(args) -> int:
    report = quantest_verify(runs=args.runs, base_seed=args.seed)
    if args.out:
        _write_json(args.out + ".json", report.json_summary())
        atomic_write_text(args.out + ".csv", report.csv_text())
    for row in report.rows:
        sys.stdout.write(
            f"{row['label']}: success={row['success_rate']:.3f} "
            f"naive={row['success_rate_naive']:.3f} budget_ok={row['budget_ok']:.3f}\n"
        )
    return 0


def _cmd_make_instance(args) -> int:
    params = _parse_params(args.params or "")
    gen = args.generator
    if gen == "lower-bound":
        inst = make_lower_bound_instance(
            K=int(params["K"]),
            gamma=float(params["gamma"]),
            j=int(params["j"]) if "j" in params else None,
            q=float(params.get("q", 0.5)),
        )
    elif gen == "near-tie":
        inst = make_near_tie_instance(
            m1=float(params["m1"]), m2=float(params["m2"]), eps=float(params["eps"])
        )
    elif gen == "heavy-top":
        inst = make_heavy_top_instance(lam=float(params["lam"]), eps=float(params["eps"]))
    elif gen == "clip":
        inst = clip(load_instance(args.instance))
    elif gen == "perturb":
        inst = perturb(
            load_instance(args.instance),
            k=int(params["k"]),
            a=int(params["a"]),
            eta=float(params["eta"]),
        )
    else:
        raise SystemExit(f"unknown generator {gen!r}")
    save_instance(inst, args.out)
    sys.stdout.write(f"wrote {args.out} (K={inst.K}, q={inst.q}, lambda={inst.lam})\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbai", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gaps", help="per-arm gap report for an instance")
    g.add_argument("--instance", required=True)
    g.add_argument("--eps", type=float, required=True)
    g.add_argument("--c", type=int, default=None)
    g.add_argument("--c-str", default=None, help="pass 'inf' for the limit gaps")
    g.add_argument("--theta", type=float, default=None)
    g.add_argument("--tol", type=float, default=1e-9)
    g.add_argument("--out", default=None, help="basename; writes .json and .csv")
    g.set_defaults(fn=_cmd_gaps)

    r = sub.add_parser("run", help="seeded reliability study")
    r.add_argument("--instance", required=True)
    r.add_argument("--eps", type=float, required=True)
    r.add_argument("--delta", type=float, required=True)
    r.add_argument("--c", type=int, default=None)
    r.add_argument("--theta", type=float, default=None)
    r.add_argument("--max-rounds", type=int, default=64)
    r.add_argument("--trials", type=int, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--jobs", type=int, default=None)
    r.add_argument("--out", default=None, help="basename; writes .json and .csv")
    r.set_defaults(fn=_cmd_run)

    s = sub.add_parser("scaling", help="pull-count scaling sweeps")
    s.add_argument("--sweep", choices=("gamma", "resolution"), default="gamma")
    s.add_argument("--gammas", default="0.16,0.08,0.04")
    s.add_argument("--ratios", default="10,100,1000")
    s.add_argument("--K", type=int, default=3)
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--c", type=int, default=None)
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--out", default=None, help="directory for per-point CSVs + summary.json")
    s.set_defaults(fn=_cmd_scaling)

    qv = sub.add_parser("quantest-verify", help="estimation success matrix")
    qv.add_argument("--runs", type=int, default=1000)
    qv.add_argument("--seed", type=int, default=0)
    qv.add_argument("--out", default=None, help="basename; writes .json and .csv")
    qv.set_defaults(fn=_cmd_quantest_verify)

    mi = sub.add_parser("make-instance", help="write an instance JSON file")
    mi.add_argument(
        "--generator",
        required=True,
        choices=("lower-bound", "near-tie", "heavy-top", "clip", "perturb"),
    )
    mi.add_argument("--params", default="")
    mi.add_argument("--instance", default=None, help="input file for clip/perturb")
    mi.add_argument("--out", required=True)
    mi.set_defaults(fn=_cmd_make_instance)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("QBAI_LOG", "WARNING").upper())
    args = _build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
