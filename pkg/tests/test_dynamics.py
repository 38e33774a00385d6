import numpy as np
import pytest

from otikin.dynamics import (
    ForceField,
    build_dynamical_plan,
    interpolate_at,
    metric_derivative_probe,
    moment_report,
    monge_mather_check,
    optimal_time_ratio_probe,
    path_action,
    reparametrize,
    spline_forcing,
    vlasov_integrate,
)
from otikin.measures import DiscreteMeasure, product_coupling
from otikin.phase import tilde_dT_sq
from otikin.scenarios import (
    crossing_ensemble,
    harmonic_single,
    nonunique_two_atom_instance,
    random_uniform_instance,
)
from otikin.solver import solve_fixed_T


class TestDynamicalPlan:
    def test_singleton_action(self):
        mu = DiscreteMeasure([[0.0]], [[0.0]], [1.0])
        nu = DiscreteMeasure([[1.0]], [[0.0]], [1.0])
        ens = build_dynamical_plan(mu, nu, product_coupling(mu, nu), 1.0)
        assert ens.action() == pytest.approx(12.0)

    def test_two_atom_optimal_action(self):
        mu, nu = nonunique_two_atom_instance()
        res = solve_fixed_T(mu, nu, 1.0)
        ens = build_dynamical_plan(mu, nu, res.plan, 1.0)
        assert ens.action() == pytest.approx(30.0, rel=1e-12)

    def test_free_transport_plan_is_straight(self):
        rng = np.random.default_rng(0)
        mu, _ = random_uniform_instance(rng, 4, 2)
        from otikin.measures import pushforward_free_transport

        nu = pushforward_free_transport(mu, 0.5)
        res = solve_fixed_T(mu, nu, 0.5)
        ens = build_dynamical_plan(mu, nu, res.plan, 0.5)
        assert ens.action() == pytest.approx(0.0, abs=1e-12)

    def test_action_matches_plan_cost(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            mu, nu = random_uniform_instance(rng, 6, 2)
            res = solve_fixed_T(mu, nu, 1.0)
            ens = build_dynamical_plan(mu, nu, res.plan, 1.0)
            assert ens.action() == pytest.approx(res.cost_sq, rel=1e-10)


class TestInterpolation:
    def test_endpoints_reproduced(self):
        rng = np.random.default_rng(2)
        mu, nu = random_uniform_instance(rng, 5, 2)
        res = solve_fixed_T(mu, nu, 1.0)
        ens = build_dynamical_plan(mu, nu, res.plan, 1.0)
        start = interpolate_at(ens, 0.0)
        # bitwise at t = 0 (evaluation returns the stored coefficients)
        for i, (src, _) in enumerate(ens.pair_indices):
            assert np.array_equal(start.positions[i], mu.positions[src])
            assert np.array_equal(start.velocities[i], mu.velocities[src])
        end = interpolate_at(ens, 1.0)
        for i, (_, dst) in enumerate(ens.pair_indices):
            assert end.positions[i] == pytest.approx(nu.positions[dst], abs=1e-12)
            assert end.velocities[i] == pytest.approx(nu.velocities[dst], abs=1e-12)

    def test_midpoint_of_drift_spline(self):
        mu = DiscreteMeasure([[0.0]], [[1.0]], [1.0])
        from otikin.measures import pushforward_free_transport

        nu = pushforward_free_transport(mu, 2.0)
        ens = build_dynamical_plan(mu, nu, product_coupling(mu, nu), 2.0)
        mid = interpolate_at(ens, 1.0)
        assert mid.positions[0] == pytest.approx([1.0])
        assert mid.velocities[0] == pytest.approx([1.0])

    def test_out_of_range_rejected(self):
        mu, nu = nonunique_two_atom_instance()
        ens = build_dynamical_plan(mu, nu, product_coupling(mu, nu), 1.0)
        with pytest.raises(ValueError):
            interpolate_at(ens, 1.5)


class TestMongeMather:
    def test_optimal_plan_separated(self):
        rng = np.random.default_rng(3)
        mu, nu = random_uniform_instance(rng, 6, 2)
        res = solve_fixed_T(mu, nu, 1.0)
        ens = build_dynamical_plan(mu, nu, res.plan, 1.0)
        rep = monge_mather_check(ens, grid_size=50)
        assert not rep.violated
        assert rep.min_separation > 1e-6

    def test_identical_endpoint_pairs_exempt(self):
        mu = DiscreteMeasure([[0.0], [0.0]], [[1.0], [1.0]], [0.5, 0.5])
        nu = DiscreteMeasure([[1.0], [1.0]], [[1.0], [1.0]], [0.5, 0.5])
        ens = build_dynamical_plan(mu, nu, product_coupling(mu, nu), 1.0)
        rep = monge_mather_check(ens)
        assert not rep.violated  # all pairs coincide, nothing to compare
        assert rep.min_separation == np.inf

    def test_crossing_pair_flagged(self):
        rep = monge_mather_check(crossing_ensemble(), grid_size=50)
        assert rep.violated
        assert rep.min_separation <= 1e-9
        assert rep.offending_time == pytest.approx(0.5, abs=1e-3)


class TestVlasov:
    def test_free_transport_exact(self):
        rng = np.random.default_rng(4)
        mu0, _ = random_uniform_instance(rng, 4, 2)
        traj = vlasov_integrate(mu0, ForceField.free(), 0.0, 1.0, 0.05)
        for t in (0.25, 0.5, 1.0):
            m = traj.measure_at(t)
            assert np.allclose(m.positions, mu0.positions + t * mu0.velocities, atol=1e-13)
            assert np.allclose(m.velocities, mu0.velocities, atol=1e-14)

    def test_harmonic_period(self):
        mu0 = DiscreteMeasure([[1.0]], [[0.0]], [1.0])
        period = 2.0 * np.pi
        dt = period / 4000
        traj = vlasov_integrate(mu0, ForceField.harmonic(), 0.0, period, dt)
        end = traj.measure_at(traj.times[-1])
        assert end.positions[0, 0] == pytest.approx(1.0, abs=10 * dt**4)
        assert end.velocities[0, 0] == pytest.approx(0.0, abs=10 * dt**4)

    def test_spline_forcing_reproduces_endpoint(self):
        mu = DiscreteMeasure([[0.0]], [[0.0]], [1.0])
        nu = DiscreteMeasure([[1.0]], [[0.5]], [1.0])
        ens = build_dynamical_plan(mu, nu, product_coupling(mu, nu), 1.0)
        traj = vlasov_integrate(mu, spline_forcing(ens), 0.0, 1.0, 1e-3)
        end = traj.measure_at(1.0)
        assert end.positions[0, 0] == pytest.approx(1.0, abs=1e-10)
        assert end.velocities[0, 0] == pytest.approx(0.5, abs=1e-10)

    def test_bad_steps_rejected(self):
        mu0 = DiscreteMeasure([[0.0]], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            vlasov_integrate(mu0, ForceField.free(), 0.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            vlasov_integrate(mu0, ForceField.free(), 0.0, 1.0, 0.3)

    def test_nonfinite_force_rejected(self):
        mu0 = DiscreteMeasure([[0.0]], [[1.0]], [1.0])
        bad = ForceField(lambda t, X, V: np.full_like(X, np.nan), tag="bad")
        with pytest.raises(ValueError):
            vlasov_integrate(mu0, bad, 0.0, 1.0, 0.1)

    def test_builtin_tags(self):
        f = ForceField.from_tag("damped:0.5")
        X = np.zeros((2, 1))
        V = np.ones((2, 1))
        assert np.allclose(f.evaluate(0.0, X, V), -0.5)
        g = ForceField.poly([[1.0], [2.0]])  # F(t) = 1 + 2 t
        assert np.allclose(g.evaluate(0.5, X, V), 2.0)
        with pytest.raises(ValueError):
            ForceField.from_tag("unknown")


class TestPathAction:
    def test_zero_force(self):
        mu0 = DiscreteMeasure([[0.0]], [[1.0]], [1.0])
        traj = vlasov_integrate(mu0, ForceField.free(), 0.0, 1.0, 0.01)
        assert path_action(traj) == pytest.approx(0.0, abs=1e-15)

    def test_spline_forcing_matches_fixed_horizon_cost(self):
        mu = DiscreteMeasure([[0.0]], [[0.0]], [1.0])
        nu = DiscreteMeasure([[1.0]], [[0.0]], [1.0])
        ens = build_dynamical_plan(mu, nu, product_coupling(mu, nu), 1.0)
        traj = vlasov_integrate(mu, spline_forcing(ens), 0.0, 1.0, 1e-3)
        ref = tilde_dT_sq(mu.atom(0), nu.atom(0), 1.0)
        assert path_action(traj) == pytest.approx(ref, rel=1e-6)


class TestMoments:
    def test_free_transport_velocity_constant(self):
        rng = np.random.default_rng(5)
        mu0, _ = random_uniform_instance(rng, 5, 2)
        traj = vlasov_integrate(mu0, ForceField.free(), 0.0, 1.0, 0.02)
        rep = moment_report(traj)
        assert rep.ok
        assert np.all(rep.v_margin >= -1e-12)

    def test_harmonic_within_slack(self):
        rep = moment_report(harmonic_single())
        assert rep.ok

    def test_underreported_force_flagged(self):
        # tamper with the recorded samples: motion without a recorded force
        # must break the velocity bound
        traj = harmonic_single()
        from otikin.dynamics import Trajectory

        faked = Trajectory(
            times=traj.times,
            states=traj.states,
            weights=traj.weights,
            forces=np.zeros_like(traj.forces),
            force_tag="tampered",
        )
        rep = moment_report(faked)
        assert not rep.ok

    def test_aliased_force_flagged(self):
        # force oscillating exactly at the step frequency: the grid samples
        # vanish while the half-step kicks drive real motion
        dt = 0.1
        omega = np.pi / dt
        f = ForceField(lambda t, X, V: np.full_like(X, 10.0 * np.sin(omega * t)))
        mu0 = DiscreteMeasure([[0.0]], [[0.0]], [1.0])
        traj = vlasov_integrate(mu0, f, 0.0, 1.0, dt)
        rep = moment_report(traj)
        assert not rep.ok


class TestProbes:
    def test_free_transport_ratios_vanish(self):
        rng = np.random.default_rng(6)
        mu0, _ = random_uniform_instance(rng, 3, 2)
        traj = vlasov_integrate(mu0, ForceField.free(), 0.0, 1.0, 0.025)
        pts = metric_derivative_probe(traj, 0.2, (0.2, 0.1, 0.05))
        for p in pts:
            assert p.ratio_tilde == pytest.approx(0.0, abs=1e-6)
            assert p.ratio_d == pytest.approx(0.0, abs=1e-6)
            assert p.force_norm == 0.0

    def test_harmonic_single_ratios(self):
        traj = harmonic_single()
        pts = metric_derivative_probe(traj, 0.3, (0.2, 0.1, 0.05))
        errs = [abs(p.ratio_tilde - p.force_norm) for p in pts]
        assert all(a > b for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 0.05 * pts[0].force_norm

    def test_free_transport_time_ratio_is_one(self):
        rng = np.random.default_rng(7)
        mu0, _ = random_uniform_instance(rng, 3, 2)
        traj = vlasov_integrate(mu0, ForceField.free(), 0.0, 1.0, 0.025)
        probe = optimal_time_ratio_probe(traj, 0.2, (0.2, 0.1, 0.05))
        for _, kind, ratio in probe.entries:
            assert kind == "finite"
            assert ratio == pytest.approx(1.0, abs=1e-6)

    def test_probe_requires_grid_alignment(self):
        traj = harmonic_single()
        with pytest.raises(ValueError):
            metric_derivative_probe(traj, 0.3, (0.0123,))


class TestReparametrize:
    def test_identity_lambda(self):
        traj = harmonic_single()
        same = reparametrize(traj, lambda s: 1.0)
        assert np.allclose(same.times, traj.times)
        assert np.allclose(same.forces, traj.forces)

    def test_constant_speedup_scales_clock_and_force(self):
        traj = harmonic_single()
        fast = reparametrize(traj, lambda s: 2.0)
        assert fast.times[-1] == pytest.approx(traj.times[-1] / 2.0)
        assert np.allclose(fast.forces, 2.0 * traj.forces)
        assert np.allclose(fast.states, traj.states)

    def test_nonpositive_lambda_rejected(self):
        traj = harmonic_single()
        with pytest.raises(ValueError):
            reparametrize(traj, lambda s: -1.0)
