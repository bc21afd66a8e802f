"""Bound arithmetic against high-precision recomputation, plus the
renewal checks and KS machinery.

Every reference constant here is re-derived inside the test with
fractions or mpmath, never copied from the implementation.
"""
import math
from fractions import Fraction

import numpy as np
import pytest
from mpmath import mp, mpf
from mpmath import log as mlog
from mpmath import sqrt as msqrt

from gsplit.diagnostics import (
    BOUND_CSV_HEADER,
    SetClassSpec,
    bound_expected_tv_b5,
    bound_expected_tv_b6,
    bound_mae_fixed_n,
    bound_mae_until_t,
    bound_tv_asymptotic,
    bound_tv_fixed_n,
    bound_tv_until_t,
    empirical_ks,
    estimate_moments,
    evaluate_bounds,
    exact_moments_from_pmf,
    wald_check,
    write_bound_csv,
)
from gsplit.engine import ExceedT, FixedN, LevelSchedule, RunLedger, TrialResult
from gsplit.errors import InsufficientDataError
from gsplit.toy import ToyNormalModel
from gsplit.engine import collect_fixed_n, collect_until_t

mp.dps = 40

# M uniform on {1, 2}: every moment is a small rational
M12 = exact_moments_from_pmf([1, 2], [0.5, 0.5])
SCHED_S10_TAU1 = LevelSchedule((0.0,), 10)


def _ledger_from_sizes(sizes, rule):
    trials = tuple(
        TrialResult(retained=np.zeros((int(s), 1)), size=int(s), kernel_steps=1)
        for s in sizes
    )
    return RunLedger(trials=trials, stopping_rule=rule,
                     schedule=LevelSchedule((0.0,), 2))


class TestExactConstants:
    """The six reference constants, re-derived with rationals + mpmath."""

    def test_c1(self):
        m, m2 = Fraction(3, 2), Fraction(5, 2)
        var = m2 - m * m                       # 1/4
        c1 = (mpf(var.numerator) / var.denominator
              + msqrt(mpf((var * m2).numerator) / (var * m2).denominator)) \
            / (mpf((m * m).numerator) / (m * m).denominator)
        got = bound_tv_fixed_n(M12, 100)
        assert abs(got.constant - float(c1)) < 1e-12
        assert abs(got.value - float(c1) / 100) < 1e-12

    def test_c1_tilde_100(self):
        want = (msqrt(mpf(5) / 2) + msqrt(3 * (mpf(17) / 2) / 100)) / (mpf(3) / 2)
        got = bound_mae_fixed_n(M12, 100)
        assert abs(got.constant - float(want)) < 1e-12
        assert abs(got.value - float(want) / 10) < 1e-12

    def test_c2_100(self):
        m, m2, m3 = mpf(3) / 2, mpf(5) / 2, mpf(9) / 2
        want = msqrt(mpf(4) / 3 * m3 * m2 * (m + m2 / 100)) / m**3
        got = bound_tv_until_t(M12, 100)
        assert abs(got.constant - float(want)) < 1e-12
        assert abs(got.value - float(want * (100 / m) ** mpf(-1.5))) < 1e-12

    def test_c2_tilde_100(self):
        m, m2 = mpf(3) / 2, mpf(5) / 2
        want = msqrt(m2) / m + m2 * m**mpf(-1.5) * mpf(100)**mpf(-0.5)
        got = bound_mae_until_t(M12, 100)
        assert abs(got.constant - float(want)) < 1e-12

    def test_c3_and_r(self):
        # r = (m2+m)/(2m) = 4/3; E[M^2 |M-1-2r|] = (1*8/3 + 4*5/3)/2 = 14/3
        r = Fraction(4, 3)
        absdev = Fraction(1, 2) * (1 * abs(Fraction(1) - 1 - 2 * r)
                                   + 4 * abs(Fraction(2) - 1 - 2 * r))
        assert absdev == Fraction(14, 3)
        c3 = absdev / (2 * Fraction(27, 8))
        got = bound_tv_asymptotic(M12, 100)
        assert abs(got.c3 - float(c3)) < 1e-12
        assert abs(got.r - 4 / 3) < 1e-12
        assert got.asymptotic_caveat is True
        want_val = mpf(c3.numerator) / c3.denominator * (mpf(100) / (mpf(3) / 2))**-2
        assert abs(got.value - float(want_val)) < 1e-12

    def test_psi2_example(self):
        # s=10, tau=1, v=1, n=100 -> K=2
        s, v, n = mpf(10), mpf(1), mpf(100)
        base = mlog(2) / (2 * n * v) + (1 + mlog(v + 1)) / v + 1
        want = sum(s**-k * msqrt(base + mlog(2 * s**(2 * k))) for k in (1, 2))
        got = bound_expected_tv_b6(M12, 100, SetClassSpec.custom(1), SCHED_S10_TAU1)
        assert abs(got.psi - float(want)) < 1e-12

    def test_b5_degenerate_m1(self):
        m1 = exact_moments_from_pmf([1], [1.0])
        want = 2 * msqrt(mlog(2) + 2 + 2 * mlog(mpf(2) * 100 / 2)) / 10
        got = bound_expected_tv_b5(m1, 100, SetClassSpec.custom(2))
        assert abs(got.value - float(want)) < 1e-12
        assert got.psi is None  # E[M^2 ln M] = 0, two-factor form undefined

    def test_b5_with_psi_factor(self):
        got = bound_expected_tv_b5(M12, 100, SetClassSpec.custom(2))
        v, n = mpf(2), mpf(100)
        m, m2, m2logm = mpf(3) / 2, mpf(5) / 2, 2 * mlog(2)
        inner = (mlog(2) + v + v * mlog(2 * n / v)) * m2 + v * m2logm
        want = msqrt(mpf(1) / 4) / (m * 10) + 2 * msqrt(inner) / (m * 10)
        assert abs(got.value - float(want)) < 1e-12
        want_psi = msqrt(inner / (v * mlog(2 * n) * m2logm))
        assert abs(got.psi - float(want_psi)) < 1e-12


class TestMomentEstimation:
    def test_hand_computed_small_sample(self):
        mom = estimate_moments(np.array([1, 2, 3]))
        assert mom.m == pytest.approx(2.0)
        assert mom.m2 == pytest.approx(14 / 3)
        assert mom.m3 == pytest.approx(12.0)
        assert mom.m4 == pytest.approx(98 / 3)
        assert mom.var_m == pytest.approx(14 / 3 - 4)
        assert mom.m2logm == pytest.approx((4 * math.log(2) + 9 * math.log(3)) / 3)
        assert mom.r_hat == pytest.approx((14 / 3 + 2) / 4)
        assert mom.se_m == pytest.approx(1.0 / math.sqrt(3))

    def test_large_sizes_do_not_overflow(self):
        mom = estimate_moments(np.array([10**6, 2 * 10**6], dtype=np.int64))
        assert math.isfinite(mom.m4)
        assert mom.m4 == pytest.approx((1e24 + 16e24) / 2, rel=1e-12)

    def test_jackknife_var_se_matches_bruteforce(self):
        rng = np.random.default_rng(30)
        x = rng.integers(1, 50, size=80).astype(float)
        mom = estimate_moments(x)
        n = len(x)
        loo = np.array([
            (np.delete(x, i)**2).mean() - np.delete(x, i).mean()**2
            for i in range(n)
        ])
        want = math.sqrt((n - 1) / n * ((loo - loo.mean())**2).sum())
        assert mom.se_var_m == pytest.approx(want, rel=1e-10)

    def test_insufficient_and_invalid_data(self):
        with pytest.raises(InsufficientDataError):
            estimate_moments(np.array([3]))
        with pytest.raises(ValueError):
            estimate_moments(np.array([1, 0]))

    def test_pmf_validation(self):
        with pytest.raises(ValueError):
            exact_moments_from_pmf([1, 2], [0.5, 0.6])
        with pytest.raises(ValueError):
            exact_moments_from_pmf([0, 1], [0.5, 0.5])


class TestBoundShapes:
    def test_bounds_decrease_in_sample_size(self):
        ns = [10, 100, 1000, 10_000]
        tv = [bound_tv_fixed_n(M12, n).value for n in ns]
        mae = [bound_mae_fixed_n(M12, n).value for n in ns]
        b5 = [bound_expected_tv_b5(M12, n, SetClassSpec.custom(3)).value for n in ns]
        assert all(a > b for a, b in zip(tv, tv[1:]))
        assert all(a > b for a, b in zip(mae, mae[1:]))
        assert all(a > b for a, b in zip(b5, b5[1:]))
        ts = [15.0, 150.0, 1500.0]
        tvu = [bound_tv_until_t(M12, t).value for t in ts]
        asy = [bound_tv_asymptotic(M12, t).value for t in ts]
        assert all(a > b for a, b in zip(tvu, tvu[1:]))
        assert all(a > b for a, b in zip(asy, asy[1:]))

    def test_set_class_constructors(self):
        assert SetClassSpec.one_sided_intervals(1).v == 2
        assert SetClassSpec.one_sided_intervals(11).v == 12
        assert SetClassSpec.rectangles(5).v == 10
        assert SetClassSpec.custom(7).v == 7
        with pytest.raises(ValueError):
            SetClassSpec.custom(0)

    def test_evaluate_bounds_requires_n_or_t(self):
        with pytest.raises(ValueError):
            evaluate_bounds(M12)

    def test_report_rows_and_csv(self, tmp_path):
        rep = evaluate_bounds(M12, n=100, t=150.0,
                              set_class=SetClassSpec.one_sided_intervals(1),
                              schedule=SCHED_S10_TAU1)
        rows = rep.rows()
        crits = [r[1] for r in rows]
        assert crits == ["tv_fixed_n", "mae_fixed_n", "expected_tv_b5",
                         "expected_tv_b6", "tv_until_t", "mae_until_t",
                         "tv_asymptotic"]
        path = tmp_path / "bounds.csv"
        write_bound_csv(path, [rep])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ",".join(BOUND_CSV_HEADER)
        assert len(lines) == 1 + len(rows)

    def test_vacuous_flag(self):
        rep = evaluate_bounds(M12, n=2, set_class=SetClassSpec.custom(5),
                              schedule=SCHED_S10_TAU1)
        flagged = {r[1]: r[4] for r in rep.rows()}
        assert flagged["expected_tv_b5"] is True     # way above 1 at n=2
        d = rep.to_dict()
        assert d["expected_tv_b5"]["vacuous"] is True


class TestWaldCheck:
    def test_constant_tour_sizes_identities(self):
        # M = 4 exactly: N = floor(t/4)+1, T = 4N, pooled m_hat = 4,
        # discrepancy is 0 by construction
        t = 10
        ledgers = [_ledger_from_sizes([4, 4, 4], ExceedT(t)) for _ in range(5)]
        rep = wald_check(ledgers)
        assert rep.m_hat == 4.0
        assert rep.m_hat_source == "pooled"
        assert rep.discrepancy == pytest.approx(0.0, abs=1e-12)
        assert rep.mean_stopped_total == 12.0
        assert rep.overshoot_mean == 2.0
        assert rep.lorden_bound == 4.0           # m2/m = 16/4
        assert rep.r_hat == pytest.approx(2.0)   # 4*3 - 10
        assert rep.r_plug_in == pytest.approx((16 + 4) / 8)

    def test_independent_moments_change_m_hat(self):
        ledgers = [_ledger_from_sizes([4, 4, 4], ExceedT(10)) for _ in range(4)]
        mom = estimate_moments(np.array([4.0, 4.0, 4.0, 4.0, 4.0]))
        rep = wald_check(ledgers, independent_moments=mom)
        assert rep.m_hat_source == "independent"
        assert rep.m_hat == 4.0

    def test_mixed_stopping_rules_rejected(self):
        a = _ledger_from_sizes([4, 4, 4], ExceedT(10))
        b = _ledger_from_sizes([4, 4, 4, 4], ExceedT(12))
        with pytest.raises(ValueError):
            wald_check([a, b])
        c = _ledger_from_sizes([4, 4], FixedN(2))
        with pytest.raises(ValueError):
            wald_check([c])
        with pytest.raises(InsufficientDataError):
            wald_check([])

    def test_toy_until_t_discrepancy_within_band(self):
        # real runs: independent m_hat, |discrepancy| <= 3 SE
        model = ToyNormalModel()
        sched = LevelSchedule((1.2816, 2.3263), 10)
        ledgers = [collect_until_t(model, sched, 50, seed=100 + i) for i in range(25)]
        pilot = collect_fixed_n(model, sched, 400, seed=999)
        mom = estimate_moments(pilot.sizes())
        rep = wald_check(ledgers, independent_moments=mom)
        assert abs(rep.discrepancy) <= 3.5 * rep.discrepancy_se
        assert rep.overshoot_mean <= rep.lorden_bound


class TestEmpiricalKs:
    def test_one_dimensional_exact(self):
        sizes = [2, 1]
        states = [np.array([[0.2], [0.8]]), np.array([[0.5]])]
        trials = tuple(TrialResult(retained=s, size=len(s), kernel_steps=1)
                       for s in states)
        led = RunLedger(trials=trials, stopping_rule=FixedN(2),
                        schedule=LevelSchedule((0.0,), 2))
        # empirical CDF jumps at 0.2, 0.5, 0.8; against U(0,1) the sup gap
        # is max over both sides of each jump
        got = empirical_ks(led, lambda x: x)
        xs = np.array([0.2, 0.5, 0.8])
        grid = np.array([1 / 3, 2 / 3, 1.0])
        want = max(np.maximum(grid - xs, xs - (grid - 1 / 3)))
        assert got == pytest.approx(want, abs=1e-14)

    def test_uniform_sample_small_ks(self):
        rng = np.random.default_rng(31)
        u = rng.uniform(size=(2000, 1))
        led = RunLedger(
            trials=(TrialResult(retained=u, size=2000, kernel_steps=1),),
            stopping_rule=FixedN(1), schedule=LevelSchedule((0.0,), 2))
        d = empirical_ks(led, lambda x: np.clip(x, 0, 1))
        assert d < 0.05

    def test_coordinate_selection(self):
        rng = np.random.default_rng(32)
        x = np.column_stack([rng.uniform(size=500), rng.normal(size=500)])
        led = RunLedger(
            trials=(TrialResult(retained=x, size=500, kernel_steps=1),),
            stopping_rule=FixedN(1), schedule=LevelSchedule((0.0,), 2))
        d = empirical_ks(led, lambda z: np.clip(z, 0, 1), coordinate=0)
        assert d < 0.1

    def test_multivariate_anchor_grid(self):
        rng = np.random.default_rng(33)
        x = rng.uniform(size=(3000, 2))
        led = RunLedger(
            trials=(TrialResult(retained=x, size=3000, kernel_steps=1),),
            stopping_rule=FixedN(1), schedule=LevelSchedule((0.0,), 2))
        d = empirical_ks(led, lambda a: np.prod(np.clip(a, 0, 1), axis=1))
        assert d < 0.06
