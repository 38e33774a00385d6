"""Dynamical side: spline plans, measure interpolation, particle Vlasov runs.

Atomic initial data makes pushforward along characteristics an exact solution
concept, so the integrator is Lagrangian: each atom follows dx/dt = v,
dv/dt = F(t, x, v) under classical RK4 with a fixed step. Trajectories record
the force samples used, which feed the action functional, the moment checks,
and the derivative/time-ratio probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import Coupling, DiscreteMeasure
from .phase import CubicSpline, spline_action, spline_from_endpoints
from .solver import SolverOptions, solve_d, solve_fixed_T

__all__ = [
    "SplineEnsemble",
    "ForceField",
    "spline_forcing",
    "Trajectory",
    "MongeMatherReport",
    "MomentReport",
    "DerivativeProbePoint",
    "TimeRatioProbe",
    "build_dynamical_plan",
    "interpolate_at",
    "monge_mather_check",
    "vlasov_integrate",
    "path_action",
    "moment_report",
    "metric_derivative_probe",
    "optimal_time_ratio_probe",
    "reparametrize",
]


@dataclass(frozen=True)
class SplineEnsemble:
    """Mass-weighted family of cubic connectors sharing one horizon."""

    splines: tuple[CubicSpline, ...]
    masses: np.ndarray
    horizon: float
    # Endpoint atom indices (i, j) per spline when built from a coupling;
    # used to exempt identical endpoint pairs from the injectivity check.
    pair_indices: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float).ravel()
        object.__setattr__(self, "masses", masses)
        if masses.size != len(self.splines):
            raise ValueError("one mass per spline required")
        if abs(float(masses.sum()) - 1.0) > 1e-9:
            raise ValueError("spline masses must sum to 1")
        if any(abs(s.horizon - self.horizon) > 1e-12 * self.horizon for s in self.splines):
            raise ValueError("all splines must share the ensemble horizon")

    def action(self) -> float:
        return float(
            sum(m * spline_action(s) for m, s in zip(self.masses, self.splines))
        )


def build_dynamical_plan(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    plan: Coupling,
    T: float,
) -> SplineEnsemble:
    """One spline per positive-mass pair of the coupling, with the pair's mass.

    The mass-weighted sum of spline actions reproduces the plan's
    fixed-horizon cost exactly (both sides are the same closed form).
    """
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    splines = []
    masses = []
    pairs = []
    P = plan.P
    for i in range(P.shape[0]):
        for j in range(P.shape[1]):
            if P[i, j] > 1e-15:
                splines.append(spline_from_endpoints(mu.atom(i), nu.atom(j), T))
                masses.append(P[i, j])
                pairs.append((i, j))
    masses = np.asarray(masses)
    return SplineEnsemble(
        splines=tuple(splines),
        masses=masses / masses.sum(),
        horizon=float(T),
        pair_indices=tuple(pairs),
    )


def interpolate_at(e: SplineEnsemble, t: float) -> DiscreteMeasure:
    """Measure traced by the ensemble at time t: atoms (alpha(t), alpha'(t))."""
    if not (-1e-12 * e.horizon <= t <= e.horizon * (1.0 + 1e-12)):
        raise ValueError(f"time {t} outside ensemble horizon [0, {e.horizon}]")
    X = np.asarray([s.position(t) for s in e.splines])
    V = np.asarray([s.velocity(t) for s in e.splines])
    return DiscreteMeasure(X, V, e.masses.copy())


@dataclass(frozen=True)
class MongeMatherReport:
    min_separation: float
    violated: bool
    offending_pair: tuple[int, int] | None
    offending_time: float | None


def monge_mather_check(
    e: SplineEnsemble,
    grid_size: int = 50,
    tol: float = 1e-9,
) -> MongeMatherReport:
    """Interior injectivity of an ensemble: distinct-endpoint splines never meet.

    Scans ``grid_size`` interior times and all spline pairs whose endpoint
    pairs differ, recording the minimum phase-space separation. For ensembles
    built from an optimal (cyclically monotone) coupling the minimum is
    strictly positive; a reported violation certifies non-optimality.
    """
    T = e.horizon
    times = np.linspace(0.0, T, grid_size + 2)[1:-1]
    n = len(e.splines)

    def endpoints(idx: int):
        s = e.splines[idx]
        return (s.position(0.0), s.velocity(0.0), s.position(T), s.velocity(T))

    def same_endpoints(i: int, j: int) -> bool:
        # Coincident atoms are legal, so distinct indices may still carry
        # identical endpoint states; those pairs are exempt as well.
        if e.pair_indices and e.pair_indices[i] == e.pair_indices[j]:
            return True
        ei, ej = endpoints(i), endpoints(j)
        return all(
            float(np.max(np.abs(a - b))) <= 1e-12 * (1.0 + float(np.max(np.abs(a))))
            for a, b in zip(ei, ej)
        )

    def pair_separation(i: int, j: int, t: float) -> float:
        si, sj = e.splines[i], e.splines[j]
        dx = si.position(t) - sj.position(t)
        dv = si.velocity(t) - sj.velocity(t)
        return float(np.sqrt(np.dot(dx, dx) + np.dot(dv, dv)))

    min_sep = np.inf
    offender = None
    offender_t = None
    states = np.empty((n, 2, e.splines[0].dim)) if n else None
    for t in times:
        for idx, s in enumerate(e.splines):
            states[idx, 0] = s.position(t)
            states[idx, 1] = s.velocity(t)
        for i in range(n):
            for j in range(i + 1, n):
                if same_endpoints(i, j):
                    continue
                gap = states[i] - states[j]
                sep = float(np.sqrt(np.sum(gap * gap)))
                if sep < min_sep:
                    min_sep = sep
                    offender = (i, j)
                    offender_t = float(t)

    if offender is not None:
        # The squared separation of a spline pair is a smooth polynomial in t,
        # so a crossing between grid points can evade the coarse scan; refine
        # locally around the worst grid point (staying inside the interior
        # span, where meetings of distinct-endpoint optimal pairs are ruled
        # out and separations stay bounded away from zero).
        lo, hi = float(times[0]), float(times[-1])
        width = (times[1] - times[0]) if len(times) > 1 else (hi - lo)
        center = offender_t
        for _ in range(4):
            a = max(lo, center - width)
            b = min(hi, center + width)
            local = np.linspace(a, b, 41)
            seps = [pair_separation(*offender, float(t)) for t in local]
            k = int(np.argmin(seps))
            if seps[k] < min_sep:
                min_sep = float(seps[k])
                offender_t = float(local[k])
            center = float(local[k])
            width /= 10.0
    violated = bool(min_sep <= tol)
    return MongeMatherReport(
        min_separation=float(min_sep),
        violated=violated,
        offending_pair=offender if violated else None,
        offending_time=offender_t if violated else None,
    )


class ForceField:
    """Time-dependent force on phase space with a vectorised evaluator.

    ``evaluate(t, X, V)`` maps an (m, n) particle block to (m, n)
    accelerations. Builtin tags: ``free`` (no force), ``harmonic`` (F = -x),
    ``damped:<gamma>`` (F = -gamma v), and ``poly`` (vector polynomial in t
    from coefficient JSON). Custom evaluators are accepted as callables.
    """

    def __init__(self, evaluate, tag: str = "custom"):
        self._evaluate = evaluate
        self.tag = tag

    def evaluate(self, t: float, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        F = np.asarray(self._evaluate(t, X, V), dtype=float)
        if F.shape != X.shape:
            raise ValueError(f"force shape {F.shape} does not match particles {X.shape}")
        return F

    @staticmethod
    def free() -> "ForceField":
        return ForceField(lambda t, X, V: np.zeros_like(X), tag="free")

    @staticmethod
    def harmonic() -> "ForceField":
        return ForceField(lambda t, X, V: -X, tag="harmonic")

    @staticmethod
    def damped(gamma: float) -> "ForceField":
        g = float(gamma)
        return ForceField(lambda t, X, V: -g * V, tag=f"damped:{g:g}")

    @staticmethod
    def poly(coeffs) -> "ForceField":
        """Vector polynomial in time: F(t) = sum_k coeffs[k] t^k, state-free."""
        C = np.atleast_2d(np.asarray(coeffs, dtype=float))

        def _eval(t, X, V):
            f = np.zeros(C.shape[1])
            for k in range(C.shape[0] - 1, -1, -1):
                f = f * t + C[k]
            return np.broadcast_to(f, X.shape).copy()

        return ForceField(_eval, tag="poly")

    @staticmethod
    def from_tag(tag: str) -> "ForceField":
        if tag == "free":
            return ForceField.free()
        if tag == "harmonic":
            return ForceField.harmonic()
        if tag.startswith("damped:"):
            return ForceField.damped(float(tag.split(":", 1)[1]))
        raise ValueError(f"unknown force tag {tag!r}")


def spline_forcing(e: SplineEnsemble) -> ForceField:
    """Per-particle forcing that drives the ensemble's atoms along their splines.

    The evaluator keys on array position, not on (x, v): particle i receives
    the acceleration of spline i at time t. Only meaningful for particle
    blocks ordered like the ensemble.
    """
    a3 = np.asarray([s.a3 for s in e.splines])
    a2 = np.asarray([s.a2 for s in e.splines])

    def _eval(t, X, V):
        if X.shape[0] != a3.shape[0]:
            raise ValueError("particle count does not match the spline ensemble")
        return 6.0 * a3 * t + 2.0 * a2

    return ForceField(_eval, tag="spline")


@dataclass(frozen=True)
class Trajectory:
    """Particle trajectory on a fixed time grid with recorded force samples.

    ``states[k]`` is the (m, 2, n) block of positions/velocities at
    ``times[k]``; weights are constant in time; ``forces[k]`` holds the force
    evaluated at the grid states (one sample per particle per time).
    """

    times: np.ndarray
    states: np.ndarray
    weights: np.ndarray
    forces: np.ndarray
    force_tag: str = "custom"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory grid must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def n_times(self) -> int:
        return self.times.size

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        span = max(1.0, float(abs(self.times[-1])))
        if abs(float(self.times[idx]) - t) > 1e-9 * span:
            raise ValueError(f"time {t} is not on the trajectory grid")
        return idx

    def measure_at(self, t: float) -> DiscreteMeasure:
        k = self.index_of(t)
        return DiscreteMeasure(
            self.states[k, :, 0, :], self.states[k, :, 1, :], self.weights.copy()
        )

    def force_norm_at(self, t: float) -> float:
        """Mass-weighted L2 norm of the recorded force at a grid time."""
        k = self.index_of(t)
        return float(
            np.sqrt(np.sum(self.weights * np.sum(self.forces[k] ** 2, axis=1)))
        )

    def velocity_norm_at(self, t: float) -> float:
        k = self.index_of(t)
        return float(
            np.sqrt(np.sum(self.weights * np.sum(self.states[k, :, 1, :] ** 2, axis=1)))
        )


def vlasov_integrate(
    mu0: DiscreteMeasure,
    F: ForceField,
    t0: float,
    t1: float,
    dt: float,
) -> Trajectory:
    """Classical RK4 on dx/dt = v, dv/dt = F(t, x, v), per particle.

    ``dt`` must divide the window; weights are carried unchanged (the particle
    method is exact in the measure variable). Force samples at the grid states
    are recorded for the action and the moment checks.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    span = float(t1) - float(t0)
    if dt >= span:
        raise ValueError(f"dt={dt} must be smaller than the window {span}")
    n_steps = int(round(span / dt))
    if abs(n_steps * dt - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"dt={dt} does not divide the window [{t0}, {t1}]")

    m, n = mu0.size, mu0.dim
    times = t0 + dt * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, m, 2, n))
    forces = np.empty((n_steps + 1, m, n))
    X = mu0.positions.copy()
    V = mu0.velocities.copy()

    def sample(t, X, V):
        f = F.evaluate(t, X, V)
        if not np.all(np.isfinite(f)):
            raise ValueError(f"non-finite force at t={t}")
        return f

    states[0, :, 0, :] = X
    states[0, :, 1, :] = V
    forces[0] = sample(times[0], X, V)
    for k in range(n_steps):
        t = float(times[k])
        k1x = V
        k1v = sample(t, X, V)
        k2x = V + 0.5 * dt * k1v
        k2v = sample(t + 0.5 * dt, X + 0.5 * dt * k1x, k2x)
        k3x = V + 0.5 * dt * k2v
        k3v = sample(t + 0.5 * dt, X + 0.5 * dt * k2x, k3x)
        k4x = V + dt * k3v
        k4v = sample(t + dt, X + dt * k3x, k4x)
        X = X + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        V = V + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
            raise ValueError(f"non-finite state after step at t={t}")
        states[k + 1, :, 0, :] = X
        states[k + 1, :, 1, :] = V
        forces[k + 1] = sample(float(times[k + 1]), X, V)
    return Trajectory(
        times=times,
        states=states,
        weights=mu0.weights.copy(),
        forces=forces,
        force_tag=F.tag,
    )


def _simpson(values: np.ndarray, dt: float) -> float:
    """Composite Simpson on a uniform grid; 3/8 correction for odd step counts."""
    n = values.size - 1
    if n < 1:
        return 0.0
    if n == 1:
        return 0.5 * dt * float(values[0] + values[1])
    total = 0.0
    if n % 2 == 1:
        # Simpson 3/8 on the last three intervals, standard rule on the rest.
        v = values[-4:]
        total += 3.0 * dt / 8.0 * float(v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3])
        values = values[: n - 3 + 1]
        n -= 3
    if n >= 2:
        total += (
            dt
            / 3.0
            * float(
                values[0]
                + values[-1]
                + 4.0 * np.sum(values[1:-1:2])
                + 2.0 * np.sum(values[2:-1:2])
            )
        )
    elif n == 1:
        total += 0.5 * dt * float(values[0] + values[1])
    return total


def _uniform_dt(traj: Trajectory) -> float:
    steps = np.diff(traj.times)
    dt = float(steps[0])
    if float(np.max(np.abs(steps - dt))) > 1e-9 * dt:
        raise ValueError("action quadrature requires a uniform time grid")
    return dt


def path_action(traj: Trajectory) -> float:
    """Action (t1 - t0) * integral of the squared force norm, by Simpson's rule."""
    if traj.forces.size == 0:
        raise ValueError("trajectory carries no force samples")
    dt = _uniform_dt(traj)
    norms_sq = np.sum(traj.weights[None, :] * np.sum(traj.forces**2, axis=2), axis=1)
    span = float(traj.times[-1] - traj.times[0])
    return span * _simpson(norms_sq, dt)


@dataclass(frozen=True)
class MomentReport:
    """Per-time margins of the velocity/position moment bounds.

    ``margin`` entries are (bound - value); negative beyond the slack flags a
    violation. The slack absorbs quadrature and integrator error at the grid
    resolution.
    """

    times: np.ndarray
    v_margin: np.ndarray
    x_margin: np.ndarray
    slack: float
    ok: bool


def moment_report(traj: Trajectory) -> MomentReport:
    """Check propagation bounds for the velocity and position moments.

    At each grid time: |v|_t <= |v|_a + int_a^t |F_s| ds and
    |x|_t <= |x|_a + int_a^t |v|_s ds, with discretisation slack
    10 dt^2 (1 + bound scale). Report-only; no exception on violation.
    """
    dt = _uniform_dt(traj)
    w = traj.weights
    v_norm = np.sqrt(np.sum(w[None, :] * np.sum(traj.states[:, :, 1, :] ** 2, axis=2), axis=1))
    x_norm = np.sqrt(np.sum(w[None, :] * np.sum(traj.states[:, :, 0, :] ** 2, axis=2), axis=1))
    f_norm = np.sqrt(np.sum(w[None, :] * np.sum(traj.forces**2, axis=2), axis=1))

    def cumtrapz(y):
        out = np.zeros_like(y)
        out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]))
        return out

    v_bound = v_norm[0] + cumtrapz(f_norm)
    x_bound = x_norm[0] + cumtrapz(v_norm)
    scale = 1.0 + float(max(np.max(v_bound), np.max(x_bound)))
    slack = 10.0 * dt * dt * scale
    v_margin = v_bound - v_norm
    x_margin = x_bound - x_norm
    ok = bool(np.all(v_margin >= -slack) and np.all(x_margin >= -slack))
    return MomentReport(
        times=traj.times.copy(),
        v_margin=v_margin,
        x_margin=x_margin,
        slack=slack,
        ok=ok,
    )


@dataclass(frozen=True)
class DerivativeProbePoint:
    h: float
    ratio_tilde: float
    ratio_d: float
    force_norm: float


def metric_derivative_probe(
    traj: Trajectory,
    t: float,
    h_list,
    opts: SolverOptions | None = None,
) -> list[DerivativeProbePoint]:
    """Forward discrepancy ratios against the instantaneous force norm.

    ``ratio_tilde`` uses the exact fixed-horizon transport at horizon h (the
    ratios are defined through the optimal coupling, not the along-trajectory
    pairing); ``ratio_d`` uses the time-optimised solver. Along force-driven
    trajectories both approach the force norm as h decreases.
    """
    force_norm = traj.force_norm_at(t)
    mu_t = traj.measure_at(t)
    out = []
    for h in h_list:
        if h <= 0:
            raise ValueError("probe offsets must be positive")
        mu_th = traj.measure_at(t + h)
        fixed = solve_fixed_T(mu_t, mu_th, float(h))
        full = solve_d(mu_t, mu_th, opts)
        out.append(
            DerivativeProbePoint(
                h=float(h),
                ratio_tilde=float(np.sqrt(max(fixed.cost_sq, 0.0)) / h),
                ratio_d=float(np.sqrt(max(full.cost_sq, 0.0)) / h),
                force_norm=force_norm,
            )
        )
    return out


@dataclass(frozen=True)
class TimeRatioProbe:
    """Optimal-time ratios at one probe time, with the motion context.

    ``entries`` holds (h, tag, T_ratio) with T_ratio = None when the optimal
    time is not finite; ``mean_velocity`` and ``velocity_norm`` report whether
    the spatial marginal is actually moving.
    """

    t: float
    entries: list
    mean_velocity: np.ndarray
    velocity_norm: float


def optimal_time_ratio_probe(
    traj: Trajectory,
    t: float,
    h_list,
    opts: SolverOptions | None = None,
) -> TimeRatioProbe:
    """Ratio of the transport-optimal horizon to the physical offset h."""
    mu_t = traj.measure_at(t)
    entries = []
    for h in h_list:
        if h <= 0:
            raise ValueError("probe offsets must be positive")
        mu_th = traj.measure_at(t + h)
        res = solve_d(mu_t, mu_th, opts)
        tag = res.optimal_time
        ratio = tag.value / h if tag.is_finite else None
        entries.append((float(h), tag.kind, ratio))
    return TimeRatioProbe(
        t=float(t),
        entries=entries,
        mean_velocity=mu_t.mean_velocity(),
        velocity_norm=float(np.sqrt(mu_t.velocity_norm_sq())),
    )


def reparametrize(traj: Trajectory, lambda_fn) -> Trajectory:
    """Time-rescaled trajectory: new clock s with ds/dt = 1/lambda(s).

    States are reused at the remapped grid; recorded forces are scaled by
    lambda(s), matching the force field of the rescaled evolution. ``lambda_fn``
    must be positive and bounded on the grid.
    """
    t = traj.times
    s = np.empty_like(t)
    s[0] = t[0]
    for k in range(t.size - 1):
        dt_k = float(t[k + 1] - t[k])
        lam = float(lambda_fn(s[k]))
        if not lam > 0 or not np.isfinite(lam):
            raise ValueError(f"lambda must be positive and finite, got {lam}")
        # One fixed-point refinement of the midpoint value keeps the remap
        # second-order accurate for smooth lambda.
        s_half = s[k] + 0.5 * dt_k / lam
        lam_mid = float(lambda_fn(s_half))
        if not lam_mid > 0 or not np.isfinite(lam_mid):
            raise ValueError(f"lambda must be positive and finite, got {lam_mid}")
        s[k + 1] = s[k] + dt_k / lam_mid
    lam_grid = np.asarray([float(lambda_fn(si)) for si in s])
    if np.any(~np.isfinite(lam_grid)) or np.any(lam_grid <= 0):
        raise ValueError("lambda must be positive and finite on the grid")
    forces = traj.forces * lam_grid[:, None, None]
    return Trajectory(
        times=s,
        states=traj.states.copy(),
        weights=traj.weights.copy(),
        forces=forces,
        force_tag=f"reparam({traj.force_tag})",
    )
