"""Quantile best-arm identification from 1-bit threshold feedback.

Modules: ``dist`` (reward laws and instances), ``channel`` (seeded 1-bit
oracle), ``quantest`` (fixed-budget quantile estimation), ``gaps`` (hardness
measures), ``engine`` (the elimination learner), ``bench`` (studies and CLI).
"""

__version__ = "0.1.0"

from .channel import BitFeedback, PullLedger, ThresholdChannel, ThresholdQuery
from .dist import (
    Instance,
    RewardDistribution,
    SatisfyingSet,
    clip,
    deterministic,
    dirac_uniform_mixture,
    discrete,
    instance_from_dict,
    load_instance,
    lower_bound_eps_max,
    make_heavy_top_instance,
    make_lower_bound_instance,
    make_near_tie_instance,
    mixture_quantile,
    perturb,
    piecewise,
    satisfying_set,
    save_instance,
    uniform,
)
from .engine import (
    AlgoConfig,
    BoundViolation,
    Grid,
    RoundTrace,
    RunResult,
    check_anytime_bounds,
    make_grid,
    predicted_pull_bound,
    run,
)
from .gaps import (
    GapConfig,
    GapReport,
    GapRow,
    ceil_int,
    choose_c,
    classify_instance,
    gap_bruteforce,
    gap_hr,
    gap_modified,
    gap_nkss,
    gap_nonsatisfying,
    gap_ours,
    gap_report,
    gap_satisfying,
    grid_resolution,
    instance_gap,
)
from .quantest import MnbsParams, quant_est, quant_est_naive, step_budget, verify_interval

__all__ = [
    "__version__",
    "AlgoConfig",
    "BitFeedback",
    "BoundViolation",
    "GapConfig",
    "GapReport",
    "GapRow",
    "Grid",
    "Instance",
    "MnbsParams",
    "PullLedger",
    "RewardDistribution",
    "RoundTrace",
    "RunResult",
    "SatisfyingSet",
    "ThresholdChannel",
    "ThresholdQuery",
    "ceil_int",
    "check_anytime_bounds",
    "choose_c",
    "classify_instance",
    "clip",
    "deterministic",
    "dirac_uniform_mixture",
    "discrete",
    "gap_bruteforce",
    "gap_hr",
    "gap_modified",
    "gap_nkss",
    "gap_nonsatisfying",
    "gap_ours",
    "gap_report",
    "gap_satisfying",
    "grid_resolution",
    "instance_from_dict",
    "instance_gap",
    "load_instance",
    "lower_bound_eps_max",
    "make_grid",
    "make_heavy_top_instance",
    "make_lower_bound_instance",
    "make_near_tie_instance",
    "mixture_quantile",
    "perturb",
    "piecewise",
    "predicted_pull_bound",
    "quant_est",
    "quant_est_naive",
    "run",
    "satisfying_set",
    "save_instance",
    "step_budget",
    "uniform",
    "verify_interval",
]
