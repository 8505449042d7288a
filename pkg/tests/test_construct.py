"""Construction pipeline: schedules, correction layers, verification."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cclab import construct, profiles, rotation
from cclab.cocycle import angle_family, as_fix, transfer
from cclab.construct import (ConstructionState, FeasibilityError,
                             PatchResidual, StepReport, correction_step,
                             increment_profile, init_state, lambda_schedule,
                             load_state, manifest_text, quarter_levels,
                             run_construction, save_state, verify_step)
from cclab.kernels import DEN, DEN_BITS
from cclab.rotation import ResonanceIntervals, first_return
from cclab.sl2 import fold_half_pi

GOLDEN = rotation.continued_fraction("golden")


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestQuarterLevels:
    def test_golden_desk_ladder(self):
        levels, skipped = quarter_levels(GOLDEN, 21, 3)
        assert levels == (21, 55, 144, 377)
        assert skipped == (34, 89, 233)

    def test_each_interval_at_most_quarter(self):
        levels, _ = quarter_levels(GOLDEN, 13, 4)
        for q_prev, q in zip(levels, levels[1:]):
            assert q * q >= 4 * q_prev * q_prev

    def test_small_start(self):
        levels, skipped = quarter_levels(GOLDEN, 13, 2)
        assert levels == (13, 34, 89)
        assert 21 in skipped and 55 in skipped

    def test_not_a_denominator(self):
        with pytest.raises(ValueError):
            quarter_levels(GOLDEN, 20, 1)

    def test_expansion_too_shallow(self):
        om = rotation.continued_fraction("golden", depth=8)
        with pytest.raises(ValueError):
            quarter_levels(om, 21, 3)


class TestLambdaSchedule:
    def test_desk_ladder_matches_recursion(self):
        sched = lambda_schedule(1000.0, 1, GOLDEN, 21,
                                levels=(21, 55, 144, 377))
        lams = [1000.0]
        for q_prev, q in zip((21, 55, 144), (55, 144, 377)):
            lams.append(math.exp(math.log(lams[-1])
                                 - 10.0 * math.log(q) / q_prev))
        assert sched.lambdas == pytest.approx(lams, rel=1e-14)
        assert sched.lambdas[1] == pytest.approx(148.339, rel=1e-4)
        assert sched.lambdas[3] == pytest.approx(39.803, rel=1e-4)

    def test_raw_convergent_single_step(self):
        sched = lambda_schedule(1000.0, 1, GOLDEN, 21, q_end=34)
        want = math.exp(math.log(1000.0) - 10.0 * math.log(34.0) / 21.0)
        assert sched.levels == (21, 34)
        assert sched.lambdas == pytest.approx([1000.0, want], rel=1e-14)

    def test_zero_steps_is_identity(self):
        sched = lambda_schedule(1000.0, 1, GOLDEN, 21, q_end=21)
        assert sched.lambdas == (1000.0,)

    def test_smooth_recursion(self):
        a = 0.05
        sched = lambda_schedule(1000.0, math.inf, GOLDEN, 21, a=a,
                                levels=(21, 55))
        want = math.exp(math.log(1000.0) - (10.0 * 55.0**2) ** a / 55.0)
        assert sched.lambdas[1] == pytest.approx(want, rel=1e-14)

    def test_desk_defaults_are_infeasible_and_reported(self):
        # the tail sum is lambda-free, so no desk lambda can meet the
        # epsilon = 0.1 reading; the schedule reports instead of failing
        sched = lambda_schedule(1000.0, 1, GOLDEN, 21,
                                levels=(21, 55, 144, 377))
        assert not sched.feasible
        assert sched.epsilon_effective > 0.5
        assert sched.floor_margin < 1.0
        assert sched.tail_sum > 10 * math.log(34.0) / 21.0

    def test_strict_raises(self):
        with pytest.raises(FeasibilityError):
            lambda_schedule(1000.0, 1, GOLDEN, 21, q_end=34, strict=True)

    def test_smooth_desk_is_feasible(self):
        sched = lambda_schedule(1000.0, math.inf, GOLDEN, 21, a=0.05,
                                q_end=55, strict=True)
        assert sched.feasible
        assert sched.tail_sum < 0.1 * math.log(1000.0)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            lambda_schedule(1.0, 1, GOLDEN, 21, q_end=34)
        with pytest.raises(ValueError):
            lambda_schedule(1000.0, 1, GOLDEN, 21, q_end=34, a=0.05)
        with pytest.raises(ValueError):
            lambda_schedule(1000.0, math.inf, GOLDEN, 21, q_end=34)
        with pytest.raises(ValueError):
            lambda_schedule(1000.0, 1, GOLDEN, 21)

    @settings(deadline=None, max_examples=40)
    @given(lam=st.floats(min_value=5.0, max_value=1e6),
           ell=st.integers(min_value=1, max_value=4))
    def test_ladder_monotone_positive(self, lam, ell):
        sched = lambda_schedule(lam, ell, GOLDEN, 21,
                                levels=(21, 55, 144, 377))
        for a, b in zip(sched.lambdas, sched.lambdas[1:]):
            assert 0.0 < b < a


def synthetic_samples(q_new, region, amps, grid=96):
    """Polynomial defect values on the region's components, mapped from
    the component centers (degree 3, so the Chebyshev fit is exact)."""
    hw = region.hw_fix * 0.5 ** DEN_BITS
    samples = {}
    for comp in (0, 1):
        pts = region.sample_fix(grid, comp)
        c0 = 1.0 if comp == 0 else 0.5
        xs = np.array([construct._segment_coord(p, comp == 0) for p in pts])
        t = (xs - c0) / hw
        samples[comp] = (pts, amps[comp] * (0.8 + 0.2 * t - 0.3 * t * t
                                            + 0.4 * t**3))
    return samples


def synthetic_values(xi2, xi1, x):
    return xi2.values(np.asarray(x) % 1.0) - xi1.values(np.asarray(x) % 1.0)


class TestIncrementProfile:
    q_new = 34
    amps = {0: 1e-2, 1: -7e-3}

    def setup_method(self):
        self.xi = profiles.base_profile(13, 1)
        self.I = ResonanceIntervals(self.q_new, 1.0)
        self.tenth = self.I.tenth()
        samples = synthetic_samples(self.q_new, self.tenth, self.amps)
        self.xi2, self.resid = increment_profile(self.xi, self.q_new, 1,
                                                 samples)

    def test_polynomial_fit_is_exact(self):
        assert self.resid < 1e-12

    def test_reproduces_values_on_fresh_points(self):
        hw = self.tenth.hw_fix * 0.5 ** DEN_BITS
        for comp, amp in self.amps.items():
            pts = self.tenth.sample_fix(37, comp)
            c0 = 1.0 if comp == 0 else 0.5
            xs = np.array([construct._segment_coord(p, comp == 0)
                           for p in pts])
            t = (xs - c0) / hw
            want = amp * (0.8 + 0.2 * t - 0.3 * t * t + 0.4 * t**3)
            got = synthetic_values(self.xi2, self.xi, xs)
            assert np.abs(got - want).max() < 1e-12

    def test_vanishes_outside_the_arcs_exactly(self):
        rng = np.random.default_rng(7)
        xs = rng.random(500)
        outside = np.array([self.I.contains_fix(as_fix(float(u))) is None
                            for u in xs])
        diff = synthetic_values(self.xi2, self.xi, xs[outside])
        assert outside.sum() > 400
        assert np.abs(diff).max() == 0.0

    def test_seams_join_to_order_ell(self):
        w = 1.0 / self.q_new**2
        w10 = w / 10.0
        eps = 1e-13
        seams = [w10, w, 1 - w, 1 - w10,
                 0.5 - w, 0.5 - w10, 0.5 + w10, 0.5 + w]
        for edge in seams:
            for order in (0, 1):
                a = self.xi2.values(np.array([edge - eps]), order=order)[0] \
                    - self.xi.values(np.array([edge - eps]), order=order)[0]
                b = self.xi2.values(np.array([edge + eps]), order=order)[0] \
                    - self.xi.values(np.array([edge + eps]), order=order)[0]
                assert abs(a - b) < 1e-6

    def test_noise_beyond_tolerance_raises(self):
        rng = np.random.default_rng(3)
        samples = synthetic_samples(self.q_new, self.tenth, self.amps)
        pts, _ = samples[0]
        samples[0] = (pts, rng.normal(0.0, 1e-3, len(pts)))
        with pytest.raises(PatchResidual):
            increment_profile(self.xi, self.q_new, 1, samples,
                              fit_tol=1e-12, flat_limit=1e-6)

    def test_smooth_window_variant(self):
        xi = profiles.base_profile(13, math.inf, a=0.05)
        samples = synthetic_samples(self.q_new, self.I, self.amps)
        xi2, resid = increment_profile(xi, self.q_new, math.inf, samples)
        assert resid < 1e-12
        w = 1.0 / self.q_new**2
        # window is identically 1 on the inner tenth
        hw10 = w / 10.0
        xs = np.linspace(-0.8 * hw10, 0.8 * hw10, 11) % 1.0
        t = ((xs + 0.5) % 1.0 - 0.5) / w
        want = self.amps[0] * (0.8 + 0.2 * t - 0.3 * t * t + 0.4 * t**3)
        got = xi2.values(xs) - xi.values(xs)
        assert np.abs(got - want).max() < 1e-12
        # and the increment dies at the arc edges
        edge = xi2.values(np.array([w, 1.0 - w, 0.5 - w, 0.5 + w])) \
            - xi.values(np.array([w, 1.0 - w, 0.5 - w, 0.5 + w]))
        assert np.abs(edge).max() < 1e-15
        outside = np.array([3 * w, 0.25, 0.5 + 3 * w, 0.75])
        assert np.abs(xi2.values(outside) - xi.values(outside)).max() == 0.0


class TestCorrectionIdentities:
    """Adding a correction layer multiplies each return block by one
    rotation at the visited endpoint and leaves everything else alone."""

    lam = 50.0

    def setup_method(self):
        self.xi = profiles.base_profile(13, 1)
        self.I = ResonanceIntervals(34, 1.0)
        samples = synthetic_samples(34, self.I.tenth(), {0: 1e-2, 1: -7e-3})
        self.xi2, _ = increment_profile(self.xi, 34, 1, samples)
        self.B1 = angle_family(GOLDEN, self.lam, self.xi)
        self.B2 = angle_family(GOLDEN, self.lam, self.xi2)

    def points(self):
        for comp in (0, 1):
            yield from self.I.tenth().sample_fix(8, comp)

    def test_forward_block_factors_through_one_rotation(self):
        for x in self.points():
            r = first_return(GOLDEN, self.I, x, "forward").time
            fx = float(synthetic_values(self.xi2, self.xi,
                                        x * 0.5 ** DEN_BITS))
            t1 = transfer(self.B1, x, r)
            t2 = transfer(self.B2, x, r)
            lhs = t2.triple.matrix(t2.triple.alpha)
            rhs = t1.triple.matrix(t1.triple.alpha) @ rot(-fx)
            assert np.abs(lhs - rhs).max() < 1e-8

    def test_forward_angle_bookkeeping(self):
        # phi drops by f at the block start; psi and alpha do not move
        for x in self.points():
            r = first_return(GOLDEN, self.I, x, "forward").time
            fx = float(synthetic_values(self.xi2, self.xi,
                                        x * 0.5 ** DEN_BITS))
            t1 = transfer(self.B1, x, r).triple
            t2 = transfer(self.B2, x, r).triple
            assert abs(fold_half_pi(t2.phi - (t1.phi - fx))) < 1e-8
            assert abs(fold_half_pi(t2.psi - t1.psi)) < 1e-10
            assert abs(t2.alpha - t1.alpha) <= 1e-10 * t1.alpha

    def test_interior_orbit_never_meets_the_support(self):
        for x in self.points():
            r = first_return(GOLDEN, self.I, x, "forward").time
            interior = [((x + j * GOLDEN.fixed) % DEN) * 0.5 ** DEN_BITS
                        for j in range(1, r)]
            diff = synthetic_values(self.xi2, self.xi, np.array(interior))
            assert np.abs(diff).max() == 0.0

    def test_backward_block_touched_only_at_the_far_end(self):
        for x in self.points():
            r = first_return(GOLDEN, self.I, x, "backward").time
            y = (x - r * GOLDEN.fixed) % DEN
            fy = float(synthetic_values(self.xi2, self.xi,
                                        y * 0.5 ** DEN_BITS))
            b1 = transfer(self.B1, x, r, "backward")
            b2 = transfer(self.B2, x, r, "backward")
            lhs = b2.triple.matrix(b2.triple.alpha)
            rhs = b1.triple.matrix(b1.triple.alpha) @ rot(-fy)
            assert np.abs(lhs - rhs).max() < 1e-8
            assert abs(fold_half_pi(b2.triple.psi - b1.triple.psi)) < 1e-10


class TestConstructionSteps:
    def base_state(self, **kw):
        return init_state(GOLDEN, 1000.0, 1, 21, steps=1, **kw)

    def test_sign_is_detected(self):
        st = self.base_state()
        assert st.sign in (-1.0, 1.0)

    def test_base_verification(self):
        st = self.base_state()
        r = verify_step(st, samples=12)
        assert r.flatness < 1e-8
        assert r.separation >= r.separation_floor
        assert r.separation_floor == pytest.approx(
            (1.0 / (20.0 * 21**2)) ** 2, rel=1e-14)
        # at the base level the per-return growth equals log lambda
        assert r.growth == pytest.approx(math.log(1000.0), abs=1e-9)
        assert r.ok

    def test_correction_requires_verified_state(self):
        st = self.base_state()
        with pytest.raises(ValueError):
            correction_step(st, grid=64)

    def test_correction_rejects_failed_report(self):
        st = self.base_state()
        bad = replace(verify_step(st, samples=8), flat_ok=False)
        with pytest.raises(ValueError):
            correction_step(st.with_report(bad), grid=64)

    def test_correction_advances_and_stays_flat(self):
        st = self.base_state()
        st = st.with_report(verify_step(st, samples=12))
        st = correction_step(st, grid=96)
        assert (st.k, st.q) == (1, 55)
        assert st.report is None
        assert len(st.increments) == 1
        q, inc, resid = st.increments[0]
        assert q == 55 and inc >= 0.0 and resid <= 1e-9
        r = verify_step(st, samples=12)
        assert r.flatness <= 1e-8
        assert r.sep_ok and r.growth_ok
        assert r.growth >= math.log(st.lambda_k)

    def test_correction_supported_inside_new_interval(self):
        st = self.base_state()
        st = st.with_report(verify_step(st, samples=12))
        st2 = correction_step(st, grid=96)
        I = ResonanceIntervals(55, 1.0)
        rng = np.random.default_rng(11)
        xs = rng.random(400)
        outside = np.array([I.contains_fix(as_fix(float(u))) is None
                            for u in xs])
        diff = st2.xi.values(xs[outside]) - st.xi.values(xs[outside])
        assert np.abs(diff).max() == 0.0

    def test_ladder_is_exhausted(self):
        st = self.base_state()
        st = st.with_report(verify_step(st, samples=8))
        st = correction_step(st, grid=64)
        st = st.with_report(verify_step(st, samples=8))
        with pytest.raises(ValueError):
            correction_step(st, grid=64)


class TestDriverAndCheckpoints:
    def test_full_run_and_roundtrip(self, tmp_path):
        path = tmp_path / "state.json"
        st = run_construction(GOLDEN, 1000.0, 1, 21, steps=2, grid=96,
                              samples=10, checkpoint=path)
        assert (st.k, st.q) == (2, 144)
        assert len(st.history) == 3
        assert all(r.ok for r in st.history)
        for a, b in zip(st.lambdas, st.lambdas[1:]):
            assert b < a

        st2 = load_state(path)
        assert st2.levels == st.levels
        assert st2.lambdas == st.lambdas
        assert st2.sign == st.sign
        assert st2.report == st.report
        assert st2.history == st.history
        assert st2.increments == st.increments
        xs = np.linspace(0.0, 1.0, 4001, endpoint=False)
        assert np.abs(st2.xi.values(xs) - st.xi.values(xs)).max() == 0.0

    def test_checkpoint_format_is_labelled(self, tmp_path):
        path = tmp_path / "s.json"
        st = init_state(GOLDEN, 1000.0, 1, 21, steps=1)
        save_state(st, path)
        doc = json.loads(path.read_text())
        assert doc["format"].startswith("cclab-construction")
        assert doc["omega"] == "golden"
        with pytest.raises(ValueError):
            load_state(__file__)

    def test_unnamed_omega_roundtrips_exactly(self, tmp_path):
        om = rotation.continued_fraction("0.43716")
        st = replace(init_state(GOLDEN, 1000.0, 1, 21, steps=1), omega=om)
        path = tmp_path / "s.json"
        save_state(st, path)
        assert load_state(path).omega.fixed == om.fixed

    def test_manifest_lines(self):
        st = init_state(GOLDEN, 1000.0, 1, 21, steps=3)
        text = manifest_text(st)
        assert "omega golden" in text
        assert "levels 21 55 144 377" in text
        assert "skipped 34 89 233" in text
        assert f"sign {st.sign:+.0f}" in text


class TestSmoothVariant:
    def test_one_smooth_step(self):
        st = init_state(GOLDEN, 1000.0, math.inf, 21, steps=1, a=0.05)
        r = verify_step(st, samples=10)
        assert r.separation_floor == pytest.approx(
            math.exp(-((20.0 * 21**2) ** 0.05)), rel=1e-14)
        assert r.ok
        st = st.with_report(r)
        st = correction_step(st, grid=80)
        r = verify_step(st, samples=10)
        assert r.flatness <= 1e-8
        assert r.separation >= math.exp(-((20.0 * 55**2) ** 0.05))
        assert r.growth_ok
