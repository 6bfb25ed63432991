"""Tests for the Monte Carlo harness: run-length estimation, calibration,
drift measurement, and the tilted-moment check.

The exact-method replication engine has a vectorized fast path; the parity
tests here pin it bit-for-bit to the generic detector loop on shared seeds,
which is what makes the remaining statistical tests meaningful.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from spectral_cusum import (
    EXACT,
    IID_FULL,
    SPECTRAL,
    CalibrationError,
    DetectorConfig,
    McPlan,
    StreamScenario,
    ValidityError,
    assignment_from_sizes,
    build_indicator,
    calibrate_threshold,
    estimate_arl,
    estimate_drift_mc,
    estimate_edd,
    mean_matrix,
    oc_curve,
    verify_equalizer_mc,
)
from spectral_cusum.montecarlo import _lindley, _rep_alarm

A21 = assignment_from_sizes((2, 1))


def h0_scenario(**kw):
    base = dict(assignment=A21, sigma=1.0, tau=None, horizon=1)
    base.update(kw)
    return StreamScenario(**base)


def exact_detector(b):
    return DetectorConfig(method=EXACT, b=b, A=build_indicator(A21))


class TestPlanValidation:
    def test_rejects_zero_replications(self):
        with pytest.raises(ValueError):
            McPlan(h0_scenario(), exact_detector(4.0), replications=0, cap=100)

    def test_rejects_cap_below_one(self):
        with pytest.raises(ValueError):
            McPlan(h0_scenario(), exact_detector(4.0), replications=10, cap=0)

    def test_rejects_cap_inside_the_window(self):
        det = DetectorConfig(method=SPECTRAL, b=2.0, m=2, w=10, d=1.0)
        with pytest.raises(ValueError):
            McPlan(h0_scenario(), det, replications=10, cap=10)


class TestLindleyBlocks:
    def test_matches_the_stepwise_recursion(self):
        rng = np.random.default_rng(5)
        for s0 in (-2.0, 0.0, 3.0):
            incs = rng.uniform(-2, 2, size=37)
            got = _lindley(incs, s0)
            s, want = s0, []
            for z in incs:
                s = max(s, 0.0) + z
                want.append(s)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


class TestExactFastPathParity:
    @pytest.mark.parametrize("convention", ["symmetric", IID_FULL])
    @pytest.mark.parametrize("tau,b", [(None, 4.0), (0, 12.0)])
    def test_alarm_times_match_the_generic_loop(self, convention, tau, b):
        """The vectorized exact path and the snapshot-by-snapshot detector
        consume the same keyed generator, so their alarms must coincide."""
        from spectral_cusum.montecarlo import _generic_result

        sc = h0_scenario(convention=convention, tau=tau)
        plan = McPlan(sc, exact_detector(b), replications=6, cap=300, master_seed=42)
        for rep in range(plan.replications):
            fast = _rep_alarm(plan, rep)
            slow = _generic_result(plan, rep, b).stop_time
            assert fast == slow


class TestArl:
    def test_requires_a_no_change_scenario(self):
        plan = McPlan(h0_scenario(tau=0), exact_detector(4.0), replications=5, cap=50)
        with pytest.raises(ValueError):
            estimate_arl(plan)

    def test_threshold_near_zero_alarms_right_after_the_lag(self):
        det = DetectorConfig(method=SPECTRAL, b=1e-9, m=2, w=5, d=1.0)
        plan = McPlan(h0_scenario(), det, replications=300, cap=100, master_seed=7)
        est = estimate_arl(plan)
        assert est.truncated == 0
        assert 6.0 <= est.mean <= 17.0

    def test_paired_seeds_make_alarm_times_monotone_in_b(self):
        plan = McPlan(h0_scenario(), exact_detector(2.0), replications=50, cap=2000)
        for rep in range(50):
            times = [
                (_rep_alarm(plan, rep, b) or plan.cap + 1) for b in (2.0, 4.0, 8.0)
            ]
            assert times[0] <= times[1] <= times[2]

    def test_matches_an_independent_reimplementation(self):
        """A plain-loop simulator with its own generator family lands within
        15% of the harness estimate."""
        plan = McPlan(
            h0_scenario(), exact_detector(4.0), replications=4000, cap=2000, master_seed=1
        )
        est = estimate_arl(plan)

        mm = mean_matrix(build_indicator(A21))
        offset = float(np.sum(mm * mm))
        iu = np.triu_indices(3)
        rng = np.random.default_rng(987)
        times = []
        for _ in range(4000):
            s, t = 0.0, 0
            while t < 2000:
                t += 1
                g = np.zeros((3, 3))
                vals = rng.standard_normal(iu[0].size)
                g[iu] = vals
                g.T[iu] = vals
                inc = 2.0 * float(np.sum(g * mm)) - offset
                s = max(s, 0.0) + inc
                if s >= 4.0:
                    break
            times.append(t)
        oracle = float(np.mean(times))
        assert est.mean == pytest.approx(oracle, rel=0.15)

    def test_truncation_is_reported_not_averaged(self):
        plan = McPlan(h0_scenario(), exact_detector(50.0), replications=20, cap=30)
        est = estimate_arl(plan)
        assert est.truncated == 20 and est.used == 0
        assert math.isnan(est.mean)


class TestEdd:
    def test_requires_an_immediate_change_scenario(self):
        plan = McPlan(h0_scenario(), exact_detector(4.0), replications=5, cap=50)
        with pytest.raises(ValueError):
            estimate_edd(plan)

    def test_noiseless_exact_delay_is_deterministic(self):
        sc = h0_scenario(sigma=0.0, tau=0)
        plan = McPlan(sc, exact_detector(12.0), replications=40, cap=50)
        est = estimate_edd(plan)
        assert est.mean == 3.0 and est.se == 0.0 and est.truncated == 0

    def test_noiseless_spectral_delay_includes_the_lag(self):
        sc = h0_scenario(sigma=0.0, tau=0)
        det = DetectorConfig(method=SPECTRAL, b=3.5, m=2, w=2, d=1.0)
        plan = McPlan(sc, det, replications=40, cap=50)
        est = estimate_edd(plan)
        assert est.mean == 4.0 and est.se == 0.0

    def test_delay_grows_with_the_threshold(self):
        sc = h0_scenario(tau=0)
        lo = McPlan(sc, exact_detector(2.0), replications=400, cap=500, master_seed=2)
        hi = McPlan(sc, exact_detector(9.0), replications=400, cap=500, master_seed=2)
        assert estimate_edd(lo).mean <= estimate_edd(hi).mean


class TestCalibration:
    def test_warm_start_within_tolerance_is_returned_unchanged(self):
        plan = McPlan(h0_scenario(), exact_detector(2.0), replications=500, cap=200)
        b = calibrate_threshold(plan, 10.0, rel_tol=0.45)
        assert b == math.log(10.0)

    def test_calibrated_threshold_reproduces_the_target(self):
        plan = McPlan(
            h0_scenario(), exact_detector(2.0), replications=800, cap=500, master_seed=3
        )
        b = calibrate_threshold(plan, 40.0, rel_tol=0.15)
        fresh = McPlan(
            h0_scenario(), exact_detector(b), replications=1500, cap=800, master_seed=91
        )
        est = estimate_arl(fresh)
        assert est.mean == pytest.approx(40.0, rel=0.2)

    def test_rejects_small_targets_and_bad_tolerances(self):
        plan = McPlan(h0_scenario(), exact_detector(2.0), replications=50, cap=200)
        with pytest.raises(ValueError):
            calibrate_threshold(plan, 5.0)
        with pytest.raises(ValueError):
            calibrate_threshold(plan, 20.0, rel_tol=0.6)

    def test_rejects_a_cap_too_small_to_observe_the_target(self):
        plan = McPlan(h0_scenario(), exact_detector(2.0), replications=50, cap=120)
        with pytest.raises(CalibrationError):
            calibrate_threshold(plan, 20.0)

    def test_rejects_scenarios_with_a_change(self):
        plan = McPlan(h0_scenario(tau=3), exact_detector(2.0), replications=50, cap=500)
        with pytest.raises(ValueError):
            calibrate_threshold(plan, 20.0)


class TestOcCurve:
    def test_rows_are_calibrated_and_ordered(self):
        plan = McPlan(
            h0_scenario(), exact_detector(2.0), replications=500, cap=450, master_seed=4
        )
        rows = oc_curve(plan, [15.0, 45.0], rel_tol=0.2)
        assert [r.gamma for r in rows] == [15.0, 45.0]
        assert rows[0].b < rows[1].b
        assert rows[0].edd <= rows[1].edd
        assert all(r.se >= 0 for r in rows)

    def test_single_point_curve(self):
        plan = McPlan(
            h0_scenario(), exact_detector(2.0), replications=400, cap=300, master_seed=4
        )
        rows = oc_curve(plan, [25.0], rel_tol=0.2)
        assert len(rows) == 1 and rows[0].gamma == 25.0

    def test_rejects_non_ascending_gammas(self):
        plan = McPlan(h0_scenario(), exact_detector(2.0), replications=50, cap=500)
        with pytest.raises(ValueError):
            oc_curve(plan, [50.0, 50.0])
        with pytest.raises(ValueError):
            oc_curve(plan, [50.0, 20.0])

    def test_oracle_delay_beats_windowed_delay_at_a_matched_target(self):
        """At a run-length target both methods can actually attain, the
        oracle's delay is no worse than the windowed detector's (within two
        pooled standard errors); the window lag alone already separates them
        here."""
        exact_plan = McPlan(
            h0_scenario(), exact_detector(2.0), replications=300, cap=150, master_seed=21
        )
        spectral_plan = McPlan(
            h0_scenario(),
            DetectorConfig(method=SPECTRAL, b=2.0, m=2, w=5),
            replications=300,
            cap=150,
            master_seed=21,
        )
        (exact_row,) = oc_curve(exact_plan, [15.0], rel_tol=0.2)
        (spectral_row,) = oc_curve(spectral_plan, [15.0], rel_tol=0.2)
        pooled = math.hypot(exact_row.se, spectral_row.se)
        assert exact_row.edd <= spectral_row.edd + 2.0 * pooled


class TestDriftMc:
    def test_pure_noise_projection_has_no_drift(self):
        sc = StreamScenario(
            assignment=assignment_from_sizes((), n=8), sigma=1.0, tau=None, horizon=1
        )
        res = estimate_drift_mc(sc, m=2, w=10, replications=400, master_seed=6)
        assert abs(res.pre.mean) <= 4.0 * max(res.pre.se, 1e-12)

    def test_noiseless_post_change_projection_is_the_eigenvalue_sum(self):
        sc = StreamScenario(
            assignment=assignment_from_sizes((12, 6)), sigma=0.0, tau=None, horizon=1
        )
        res = estimate_drift_mc(sc, m=2, w=5, replications=20)
        assert res.post.mean == pytest.approx(18.0, abs=1e-9)
        assert res.post.se == 0.0
        assert res.pre.mean == 0.0

    def test_longer_windows_recover_more_of_the_signal(self):
        sc = StreamScenario(
            assignment=assignment_from_sizes((12, 6)), sigma=1.0, tau=None, horizon=1
        )
        short = estimate_drift_mc(sc, m=2, w=5, replications=150, master_seed=8)
        long = estimate_drift_mc(sc, m=2, w=50, replications=150, master_seed=8)
        assert long.post.mean > short.post.mean

    def test_rejects_zero_replications(self):
        with pytest.raises(ValueError):
            estimate_drift_mc(h0_scenario(), m=2, w=5, replications=0)


class TestEqualizerMc:
    def test_zero_tilt_is_exactly_one(self):
        assert verify_equalizer_mc(10, 2, 30, 0.5, 0.0, replications=1) == 1.0

    def test_noiseless_value_is_the_closed_form(self):
        """With sigma = 0 every replication contributes exp(-delta d) with
        d = m / delta, so the estimate equals exp(-m) without sampling."""
        got = verify_equalizer_mc(10, 2, 30, 0.0, 1.0, replications=5)
        assert got == pytest.approx(math.exp(-2.0), rel=1e-15)

    def test_heavy_tail_guard_warns_and_refuses(self):
        with pytest.warns(UserWarning, match="heavy-tailed"):
            with pytest.raises(ValidityError):
                verify_equalizer_mc(10, 2, 30, 1.0, 2.0, replications=10)

    def test_monte_carlo_matches_the_conditional_moment(self):
        """The scored snapshot is independent of the estimated projector, and
        the projector has rank m with Frobenius norm sqrt(m), so the tilted
        moment is exp(m sigma^2 delta^2 / 2 - delta d) regardless of the
        window: about 0.1396 at these parameters. The estimate must land
        within a few percent of that value."""
        sigma, delta, m = 0.5, 0.5, 2
        d = sigma * sigma * delta / 2.0 + m / delta
        want = math.exp(m * sigma * sigma * delta * delta / 2.0 - delta * d)
        got = verify_equalizer_mc(10, 2, 30, sigma, delta, replications=20000)
        assert want == pytest.approx(0.13963, rel=1e-4)
        assert got == pytest.approx(want, rel=0.05)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            verify_equalizer_mc(10, 0, 30, 0.5, 0.5, replications=10)
        with pytest.raises(ValueError):
            verify_equalizer_mc(2, 3, 30, 0.5, 0.5, replications=10)
        with pytest.raises(ValueError):
            verify_equalizer_mc(10, 2, 0, 0.5, 0.5, replications=10)
        with pytest.raises(ValueError):
            verify_equalizer_mc(10, 2, 30, -0.5, 0.5, replications=10)
        with pytest.raises(ValueError):
            verify_equalizer_mc(10, 2, 30, 0.5, -0.5, replications=10)
        with pytest.raises(ValueError):
            verify_equalizer_mc(10, 2, 30, 0.5, 0.5, replications=0)


class TestWorkerDeterminism:
    def test_worker_count_does_not_change_the_estimate(self):
        plan = McPlan(
            h0_scenario(), exact_detector(3.0), replications=64, cap=400, master_seed=9
        )
        one = estimate_arl(plan, workers=1)
        two = estimate_arl(plan, workers=2)
        assert one == two
