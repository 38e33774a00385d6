import numpy as np
import pytest

from otikin.phase import (
    PhaseState,
    classify_zero,
    curve_d_derivative,
    d_sq,
    free_transport,
    optimal_time_point,
    spline_action,
    spline_eval,
    spline_from_endpoints,
    tilde_d_sq,
    tilde_dT_sq,
)


def S(x, v):
    return PhaseState(np.atleast_1d(x), np.atleast_1d(v))


class TestSpline:
    def test_unit_endpoints(self):
        s = spline_from_endpoints(S(0.0, 0.0), S(1.0, 1.0), 1.0)
        end = spline_eval(s, 1.0)
        assert end.x == pytest.approx([1.0], abs=1e-14)
        assert end.v == pytest.approx([1.0], abs=1e-14)
        # alpha(t) = 2 t^2 - t^3 for these endpoints
        mid = spline_eval(s, 0.5)
        assert mid.x == pytest.approx([2 * 0.25 - 0.125], abs=1e-14)

    def test_free_transport_is_straight(self):
        src = S([1.0, -2.0], [0.5, 0.25])
        dst = free_transport(src, 3.0)
        s = spline_from_endpoints(src, dst, 3.0)
        assert np.allclose(s.a3, 0.0, atol=1e-14)
        assert np.allclose(s.a2, 0.0, atol=1e-14)
        assert spline_action(s) == pytest.approx(0.0, abs=1e-13)
        half = spline_eval(s, 1.5)
        assert half.x == pytest.approx(src.x + 1.5 * src.v)
        assert half.v == pytest.approx(src.v)

    def test_rest_to_rest_action(self):
        s = spline_from_endpoints(S(0.0, 0.0), S(1.0, 0.0), 1.0)
        assert spline_action(s) == pytest.approx(12.0, rel=1e-14)

    def test_action_equals_fixed_horizon_cost(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 4))
            a = PhaseState(rng.normal(size=n), rng.normal(size=n))
            b = PhaseState(rng.normal(size=n), rng.normal(size=n))
            T = float(np.exp(rng.uniform(-2, 2)))
            ref = tilde_dT_sq(a, b, T)
            assert spline_action(spline_from_endpoints(a, b, T)) == pytest.approx(
                ref, rel=1e-12, abs=1e-12
            )

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            spline_from_endpoints(S(0.0, 0.0), S(1.0, 1.0), 0.0)
        with pytest.raises(ValueError):
            spline_from_endpoints(S(0.0, 0.0), S([1.0, 2.0], [0.0, 0.0]), 1.0)
        s = spline_from_endpoints(S(0.0, 0.0), S(1.0, 1.0), 1.0)
        with pytest.raises(ValueError):
            spline_eval(s, 1.5)


class TestPointwiseCosts:
    def test_fixed_horizon_examples(self):
        assert tilde_dT_sq(S(0.0, 0.0), S(1.0, 0.0), 1.0) == pytest.approx(12.0)
        # head-on pair: value is independent of the horizon
        for T in (0.1, 1.0, 7.0):
            assert tilde_dT_sq(S(0.0, 1.0), S(0.0, -1.0), T) == pytest.approx(4.0)
        assert tilde_dT_sq(S(1.0, 2.0), S(1.0 + 3.0 * 2.0, 2.0), 3.0) == pytest.approx(
            0.0, abs=1e-14
        )

    def test_time_optimised_branches(self):
        assert tilde_d_sq(S(0.0, 1.0), S(1.0, 1.0)) == pytest.approx(0.0, abs=1e-14)
        assert tilde_d_sq(S(0.0, 1.0), S(0.0, 1.0)) == pytest.approx(12.0)
        # clamp active when drift and velocities disagree
        assert tilde_d_sq(S(0.0, -1.0), S(1.0, -1.0)) == pytest.approx(12.0)

    def test_envelope_branches(self):
        assert d_sq(S(0.0, 1.0), S(0.0, 3.0)) == pytest.approx(4.0)
        assert tilde_d_sq(S(0.0, 1.0), S(0.0, 3.0)) == pytest.approx(52.0)
        assert d_sq(S(0.0, 0.0), S(1.0, 0.0)) == pytest.approx(0.0, abs=1e-14)

    def test_envelope_below_tilde(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            n = int(rng.integers(1, 4))
            a = PhaseState(rng.normal(size=n), rng.normal(size=n))
            b = PhaseState(rng.normal(size=n), rng.normal(size=n))
            lo, hi = d_sq(a, b), tilde_d_sq(a, b)
            assert lo <= hi + 1e-12
            # distinct positions almost surely: the two costs agree there
            assert lo == pytest.approx(hi, rel=1e-12)

    def test_optimal_time_tags(self):
        assert optimal_time_point(S(0.0, 1.0), S(1.0, 1.0)).value == pytest.approx(1.0)
        assert optimal_time_point(S(3.0, 5.0), S(3.0, -2.0)).kind == "zero"
        assert optimal_time_point(S(0.0, -1.0), S(1.0, -1.0)).kind == "infinite"

    def test_grid_minimum_matches_infimum(self):
        rng = np.random.default_rng(2)
        grid = np.logspace(-3, 3, 2000)
        for _ in range(200):
            n = int(rng.integers(1, 4))
            a = PhaseState(rng.normal(size=n), rng.normal(size=n))
            b = PhaseState(rng.normal(size=n), rng.normal(size=n))
            inf_val = tilde_d_sq(a, b)
            tag = optimal_time_point(a, b)
            Ts = grid
            if tag.is_finite:
                Ts = np.concatenate([grid, [tag.value]])
            vals = [tilde_dT_sq(a, b, float(T)) for T in Ts]
            gmin = min(vals)
            assert gmin >= inf_val - 1e-9 * (1 + abs(inf_val))
            if tag.is_finite:
                assert gmin - inf_val <= 1e-9 * (1 + abs(inf_val))

    def test_triangle_inequality_fails(self):
        # witness of asymmetry: stopping early beats the direct connection
        p1, p2, p3 = S(0.0, 1.0), S(1.0, 0.0), S(-1.0, 0.0)
        d12 = np.sqrt(d_sq(p1, p2))
        d23 = np.sqrt(d_sq(p2, p3))
        d13 = np.sqrt(d_sq(p1, p3))
        assert d13 > d12 + d23
        assert d12 == pytest.approx(1.0)
        assert d23 == pytest.approx(0.0, abs=1e-14)
        assert d13 == pytest.approx(2.0)


class TestFreeTransport:
    def test_identity_and_shift(self):
        s = S(0.0, 1.0)
        assert free_transport(s, 0.0).x == pytest.approx([0.0])
        img = free_transport(s, 2.0)
        assert img.x == pytest.approx([2.0])
        assert img.v == pytest.approx([1.0])

    def test_semigroup(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            s = PhaseState(rng.normal(size=2), rng.normal(size=2))
            ab = free_transport(free_transport(s, 2.0), 1.0)
            once = free_transport(s, 3.0)
            assert ab.x == pytest.approx(once.x, rel=1e-14)
            assert ab.v == pytest.approx(once.v, rel=1e-14)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            free_transport(S(0.0, 1.0), -0.1)

    def test_zero_cost_on_drift_pairs(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            s = PhaseState(rng.normal(size=3), rng.normal(size=3))
            T = float(rng.uniform(0, 5))
            assert d_sq(s, free_transport(s, T)) <= 1e-12


class TestClassifyZero:
    def test_drift_pair(self):
        src = S([0.0, 1.0], [1.0, 0.5])
        out = classify_zero(src, free_transport(src, 0.7), 1e-9)
        assert out.kind == "free_transport"
        assert out.T == pytest.approx(0.7, abs=1e-9)

    def test_both_rest(self):
        out = classify_zero(S(0.0, 0.0), S(5.0, 0.0), 1e-9)
        assert out.kind == "both_rest"

    def test_positive(self):
        out = classify_zero(S(0.0, 1.0), S(0.0, 2.0), 1e-9)
        assert out.kind == "positive"
        assert out.value == pytest.approx(1.0)


class TestCurveDerivative:
    def test_straight_line_has_zero_ratios(self):
        ts = np.linspace(0, 1, 101)
        samples = [(float(t), S(2.0 * t, 2.0)) for t in ts]
        ratios = curve_d_derivative(samples, 0.2, [0.2, 0.1, 0.05])
        assert ratios == pytest.approx([0.0, 0.0, 0.0], abs=1e-7)

    def test_rest_curve_has_zero_ratios(self):
        ts = np.linspace(0, 1, 101)
        samples = [(float(t), S(np.sin(3 * t), 0.0)) for t in ts]
        ratios = curve_d_derivative(samples, 0.1, [0.1, 0.05])
        assert ratios == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_oscillator_ratios_approach_acceleration(self):
        ts = np.linspace(0, 1, 1001)
        samples = [(float(t), S(np.cos(t), -np.sin(t))) for t in ts]
        ratios = curve_d_derivative(samples, 0.0, [0.2, 0.1, 0.05, 0.025])
        errs = [abs(r - 1.0) for r in ratios]
        assert all(a > b for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-3

    def test_missing_samples_rejected(self):
        samples = [(0.0, S(0.0, 0.0)), (1.0, S(1.0, 0.0))]
        with pytest.raises(ValueError):
            curve_d_derivative(samples, 0.0, [0.3])


def test_state_validation():
    with pytest.raises(ValueError):
        PhaseState(np.array([1.0, 2.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        PhaseState(np.array([np.inf]), np.array([0.0]))
