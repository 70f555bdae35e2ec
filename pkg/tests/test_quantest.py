"""Grid quantile estimation: guarantee, budgets, twin-loop agreement."""

import math

import numpy as np
import pytest

from qbai import (
    Instance,
    MnbsParams,
    ThresholdChannel,
    deterministic,
    dirac_uniform_mixture,
    discrete,
    quant_est,
    quant_est_naive,
    step_budget,
    uniform,
    verify_interval,
)
from qbai import quantest as qt
from qbai import _kernels
from oracles import interval_meets_window


def unit_grid(points: int) -> np.ndarray:
    return np.concatenate(([-math.inf], np.linspace(0.0, 1.0, points), [math.inf]))


def one_arm(dist, tau: float) -> Instance:
    return Instance(arms=(dist,), q=tau, lam=1.0)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            MnbsParams(tau=0.5, delta_relax=0.6, delta_fail=0.1)
        with pytest.raises(ValueError):
            MnbsParams(tau=0.9, delta_relax=0.2, delta_fail=0.1)
        with pytest.raises(ValueError):
            MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.0)
        with pytest.raises(ValueError):
            MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.1, kappa=1.5)

    def test_step_budget_formula(self):
        p = MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.1)
        assert step_budget(22, p) == math.ceil(10 * 100 * math.log(220))
        p2 = MnbsParams(tau=0.5, delta_relax=0.25, delta_fail=0.0125)
        assert step_budget(22, p2) == math.ceil(160 * math.log(1760))


class TestDeterministicArms:
    def test_point_mass_unique_interval(self):
        # the step CDF makes exactly one interval admissible
        xs = np.concatenate(([-math.inf], np.arange(0, 1.0001, 0.1), [math.inf]))
        p = MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.1)
        arm = deterministic(0.4)
        for seed in range(25):
            ch = ThresholdChannel(one_arm(arm, 0.5), seed)
            i = quant_est(ch, 1, xs, p)
            assert i == 4
            assert xs[i] == pytest.approx(0.3)

    def test_naive_agrees_on_deterministic(self):
        xs = unit_grid(33)
        p = MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.1)
        for r in (0.15, 0.5, 0.85):
            arm = deterministic(r)
            a = quant_est(ThresholdChannel(one_arm(arm, 0.5), 0), 1, xs, p)
            b = quant_est_naive(ThresholdChannel(one_arm(arm, 0.5), 0), 1, xs, p)
            assert verify_interval(arm, xs, a, 0.5, 0.1)
            assert verify_interval(arm, xs, b, 0.5, 0.1)


class TestGuarantee:
    def test_mixture_success_rate(self):
        # analytic-CDF judge on 1000 seeded runs
        arm = dirac_uniform_mixture(1 / 3)
        xs = np.concatenate(([-math.inf], np.arange(0, 1.0001, 0.05), [math.inf]))
        p = MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.1)
        ok = 0
        for seed in range(1000):
            ch = ThresholdChannel(one_arm(arm, 0.5), seed)
            i = quant_est(ch, 1, xs, p)
            ok += int(verify_interval(arm, xs, i, 0.5, 0.1))
        assert ok / 1000 >= 0.90

    def test_off_center_tau(self):
        arm = uniform(0.0, 1.0)
        xs = unit_grid(41)
        for tau in (0.25, 0.75):
            p = MnbsParams(tau=tau, delta_relax=0.05, delta_fail=0.1)
            ok = sum(
                verify_interval(arm, xs, quant_est(ThresholdChannel(one_arm(arm, tau), s), 1, xs, p), tau, 0.05)
                for s in range(300)
            )
            assert ok / 300 >= 0.872, tau

    def test_verify_interval_matches_oracle(self):
        arm = dirac_uniform_mixture(0.3)
        xs = unit_grid(21)
        for i in range(len(xs) - 1):
            got = verify_interval(arm, xs, i, 0.4, 0.08)
            want = interval_meets_window(arm, xs, i, 0.4, 0.08)
            assert got == want, i

    def test_verify_interval_open_window(self):
        # touching the window edge exactly does not count
        arm = uniform(0.0, 1.0)
        xs = np.array([-math.inf, 0.0, 0.4, 1.0, math.inf])
        # interval [0, 0.4): F-range [0, 0.4], window (0.4, 0.6) is open
        assert not verify_interval(arm, xs, 1, 0.5, 0.1)
        assert verify_interval(arm, xs, 2, 0.5, 0.1)


class TestBudgets:
    def test_hard_cap_always(self):
        arm = dirac_uniform_mixture(0.5)
        xs = unit_grid(17)
        p = MnbsParams(tau=0.4, delta_relax=0.1, delta_fail=0.2)
        cap = step_budget(len(xs) - 1, p)
        for seed in range(50):
            ch = ThresholdChannel(one_arm(arm, 0.4), seed)
            quant_est(ch, 1, xs, p)
            led = ch.snapshot_ledger()
            assert led.total_pulls + led.sentinel_queries <= cap

    def test_mass_stop_reduces_queries(self):
        # The stop threshold is reachable only when the target interval
        # gains against both neighbours.  Here the quantile sits in the
        # leftmost interval, so every query lands on one of its endpoints
        # and the deterministic bits crush both other intervals.
        arm = deterministic(0.1)
        xs = np.array([-math.inf, 0.3, 0.6, math.inf])
        strict = MnbsParams(tau=0.4, delta_relax=0.1, delta_fail=0.1)
        stopping = MnbsParams(
            tau=0.4, delta_relax=0.1, delta_fail=0.1, stop_mass=1 - 0.1 / 4
        )
        for seed in range(5):
            ch1 = ThresholdChannel(one_arm(arm, 0.4), seed)
            i1 = quant_est(ch1, 1, xs, strict)
            l1 = ch1.snapshot_ledger()
            full = l1.total_pulls + l1.sentinel_queries
            ch2 = ThresholdChannel(one_arm(arm, 0.4), seed)
            i2 = quant_est(ch2, 1, xs, stopping)
            l2 = ch2.snapshot_ledger()
            short = l2.total_pulls + l2.sentinel_queries
            assert i1 == i2 == 0
            assert full == step_budget(3, strict)
            assert short < full / 5

    def test_mass_stop_rarely_fires_mid_grid(self):
        # With the quantile in an interior interval the selector parks
        # the posterior's tau-quantile inside it, which pins roughly tau
        # mass to its left; no single interval can then clear a stop
        # threshold above max(tau, 1 - tau), even for a point mass.
        arm = deterministic(0.51)
        xs = unit_grid(33)
        p = MnbsParams(
            tau=0.5, delta_relax=0.05, delta_fail=0.1, stop_mass=1 - 0.1 / 4
        )
        ch = ThresholdChannel(one_arm(arm, 0.5), 4)
        quant_est(ch, 1, xs, p)
        led = ch.snapshot_ledger()
        total = led.total_pulls + led.sentinel_queries
        assert total == step_budget(len(xs) - 1, p)

    def test_scaling_advantage_over_naive(self):
        # m = 64 intervals, Delta = 0.05: posterior loop within 1.5x of
        # the repetition baseline's query count
        xs = unit_grid(64)
        assert len(xs) - 1 == 65  # 63 interior intervals plus two tails
        xs = unit_grid(63)
        m = len(xs) - 1
        assert m == 64
        arm = dirac_uniform_mixture(0.2)
        p = MnbsParams(tau=0.5, delta_relax=0.05, delta_fail=0.1)
        ch1 = ThresholdChannel(one_arm(arm, 0.5), 0)
        quant_est(ch1, 1, xs, p)
        led1 = ch1.snapshot_ledger()
        ch2 = ThresholdChannel(one_arm(arm, 0.5), 0)
        quant_est_naive(ch2, 1, xs, p)
        led2 = ch2.snapshot_ledger()
        q1 = led1.total_pulls + led1.sentinel_queries
        q2 = led2.total_pulls + led2.sentinel_queries
        assert q1 <= 1.5 * q2

    def test_naive_single_interval(self):
        xs = np.array([0.0, 1.0])
        p = MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.1)
        ch = ThresholdChannel(one_arm(uniform(0, 1), 0.5), 0)
        assert quant_est_naive(ch, 1, xs, p) == 0
        assert ch.snapshot_ledger().total_pulls == 0


class TestTwinLoops:
    def test_kernel_and_reference_agree_exactly(self):
        # same index and identical ledgers, across taus and stop modes
        if not _kernels.HAVE_NUMBA:
            pytest.skip("compiled loop unavailable")
        xs = unit_grid(29)
        arms = (uniform(0.0, 1.0), dirac_uniform_mixture(0.4), discrete([(0.3, 0.5), (0.8, 0.5)]))
        for arm in arms:
            for tau, stop in ((0.5, None), (0.3, None), (0.7, 1 - 0.025), (0.5, 1 - 0.025)):
                p = MnbsParams(tau=tau, delta_relax=0.1, delta_fail=0.1, stop_mass=stop)
                t_max = step_budget(len(xs) - 1, p)
                for seed in (0, 1, 2):
                    inst = one_arm(arm, tau)
                    ch1 = ThresholdChannel(inst, seed)
                    i1 = quant_est(ch1, 1, xs, p)
                    ch2 = ThresholdChannel(inst, seed)
                    i2 = qt._quant_est_reference(
                        ch2, 1, xs, p, t_max, p.kappa * p.delta_relax,
                        2.0 if stop is None else stop,
                    )
                    assert i1 == i2, (arm.family, tau, stop, seed)
                    assert ch1.snapshot_ledger() == ch2.snapshot_ledger()

    def test_frozen_posterior_fast_forward_budget(self):
        # cum weight below the top sentinel never reaches tau, so the
        # selector parks on +inf from step one; the posterior is then
        # frozen and the whole budget is charged as sentinel queries
        arm = uniform(0.0, 1.0)
        xs = np.array([-math.inf, 0.5, math.inf])
        p = MnbsParams(tau=0.9, delta_relax=0.09, delta_fail=0.1)
        cap = step_budget(2, p)
        ch = ThresholdChannel(one_arm(arm, 0.9), 3)
        idx = quant_est(ch, 1, xs, p)
        led = ch.snapshot_ledger()
        assert idx == 0
        assert led.total_pulls == 0
        assert led.sentinel_queries == cap

    def test_frozen_posterior_stops_in_one_step(self):
        # same frozen state, but the stop threshold is already met, so a
        # single sentinel query settles it
        arm = uniform(0.0, 1.0)
        xs = np.array([-math.inf, 0.5, math.inf])
        p = MnbsParams(tau=0.9, delta_relax=0.09, delta_fail=0.1, stop_mass=0.4)
        ch = ThresholdChannel(one_arm(arm, 0.9), 3)
        idx = quant_est(ch, 1, xs, p)
        led = ch.snapshot_ledger()
        assert idx == 0
        assert led.total_pulls == 0
        assert led.sentinel_queries == 1

    def test_grid_validation(self):
        p = MnbsParams(tau=0.5, delta_relax=0.1, delta_fail=0.1)
        ch = ThresholdChannel(one_arm(uniform(0, 1), 0.5), 0)
        with pytest.raises(ValueError):
            quant_est(ch, 1, np.array([0.0, 0.0, 1.0]), p)
        with pytest.raises(ValueError):
            quant_est(ch, 1, np.array([0.5]), p)
