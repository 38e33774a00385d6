"""Packaged instances used by the verification suites and the test bench.

Everything here is deterministic: random instances take an explicit seed and
use the PCG64 generator, so the shipped numbers reproduce across platforms.
"""

from __future__ import annotations

import numpy as np

from .dynamics import ForceField, SplineEnsemble, Trajectory, vlasov_integrate
from .measures import DiscreteMeasure, pushforward_free_transport
from .phase import PhaseState, spline_from_endpoints

__all__ = [
    "nonunique_two_atom_instance",
    "circle_measure",
    "circle_shift_coupling_moments",
    "factor2_endpoints",
    "factor2_force_integral",
    "factor2_trajectory",
    "harmonic_single",
    "harmonic_ensemble",
    "opposite_pair",
    "free_transport_pair",
    "generic_positive_instance",
    "random_uniform_instance",
    "crossing_ensemble",
]


def nonunique_two_atom_instance():
    """Two-atom instance with two distinct optimal plans of equal cost 30.

    Both atoms sit at the origin of the plane; one moves with speed 2, the
    other with speed sqrt(5) (so that 5 |v1|^2 = 4 |v2|^2); the target drifts
    the first atom for one time unit. The two permutation plans tie at cost 30
    with optimal horizons 1 and 2.
    """
    v1 = np.array([2.0, 0.0])
    v2 = np.array([0.0, np.sqrt(5.0)])
    x = np.zeros(2)
    mu = DiscreteMeasure([x, x], [v1, v2], [0.5, 0.5])
    nu = DiscreteMeasure([x + 1.0 * v1, x], [v1, v2], [0.5, 0.5])
    return mu, nu


def circle_measure(N: int) -> DiscreteMeasure:
    """N equispaced atoms on the unit circle with unit tangent velocities."""
    theta = 2.0 * np.pi * np.arange(N) / N
    X = np.stack([np.sin(theta), np.cos(theta)], axis=1)
    V = np.stack([np.cos(theta), -np.sin(theta)], axis=1)
    return DiscreteMeasure(X, V, np.full(N, 1.0 / N))


def circle_shift_coupling_moments(N: int):
    """Shift-by-one coupling of the circle measure with itself, as a coupling.

    Atom i is matched to atom i+1 (mod N). The time-optimised cost of this
    coupling collapses to 4 sin^2(pi / N), which vanishes as N grows while
    every position-preserving coupling keeps cost at least 3 C ~ 12.
    """
    from .measures import Coupling

    mu = circle_measure(N)
    P = np.zeros((N, N))
    for i in range(N):
        P[i, (i + 1) % N] = 1.0 / N
    return mu, Coupling(P, mu, mu)


def factor2_endpoints(eps: float):
    """Endpoint states of the two-phase slow/brake curve with parameter eps."""
    t1 = 1.0 + np.sqrt(eps)
    start = PhaseState([0.0], [0.0])
    end = PhaseState([2.0 * eps * np.sqrt(eps)], [2.0 * eps - 2.0 * np.sqrt(eps)])
    return start, end, t1


def factor2_force_integral(eps: float) -> float:
    """Closed form of the time integral of the force norm: 2 eps + 2 sqrt(eps)."""
    return 2.0 * eps + 2.0 * np.sqrt(eps)


def factor2_trajectory(eps: float, dt: float) -> Trajectory:
    """Single-particle trajectory accelerating gently then braking hard.

    The force is +2 eps on [0, 1] and -2 on [1, 1 + sqrt(eps)]; the endpoint
    discrepancy exceeds the force-norm integral by a factor approaching 2 as
    eps decreases.
    """
    t1 = 1.0 + np.sqrt(eps)

    def _force(t, X, V):
        a = 2.0 * eps if t <= 1.0 else -2.0
        return np.full_like(X, a)

    mu0 = DiscreteMeasure([[0.0]], [[0.0]], [1.0])
    return vlasov_integrate(mu0, ForceField(_force, tag="factor2"), 0.0, t1, dt)


def harmonic_single(t1: float = 1.0, dt: float = 1.0 / 160.0) -> Trajectory:
    """Unit-amplitude oscillator: single particle from (1, 0) under F = -x."""
    mu0 = DiscreteMeasure([[1.0]], [[0.0]], [1.0])
    return vlasov_integrate(mu0, ForceField.harmonic(), 0.0, t1, dt)


def harmonic_ensemble(
    m: int = 32,
    n: int = 1,
    seed: int = 42,
    t1: float = 1.0,
    dt: float = 1.0 / 160.0,
) -> Trajectory:
    """Gaussian particle cloud under the harmonic force."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, n))
    V = rng.normal(size=(m, n))
    mu0 = DiscreteMeasure(X, V, np.full(m, 1.0 / m))
    return vlasov_integrate(mu0, ForceField.harmonic(), 0.0, t1, dt)


def opposite_pair(t1: float = 1.0, dt: float = 1.0 / 160.0) -> Trajectory:
    """Two mirror-image particles; total momentum vanishes at all times."""
    mu0 = DiscreteMeasure([[1.0], [-1.0]], [[0.0], [0.0]], [0.5, 0.5])
    return vlasov_integrate(mu0, ForceField.harmonic(), 0.0, t1, dt)


def free_transport_pair(T: float = 0.7, seed: int = 7, m: int = 5, n: int = 2):
    """Random cloud and its drift image; discrepancy zero with unique time T."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, n))
    V = rng.normal(size=(m, n))
    w = rng.uniform(0.5, 1.5, size=m)
    mu = DiscreteMeasure(X, V, w / w.sum())
    return mu, pushforward_free_transport(mu, T)


def generic_positive_instance(seed: int = 2024, m: int = 4, n: int = 2):
    """Fixed random pair that is far from every zero-discrepancy class."""
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure(
        rng.normal(size=(m, n)), rng.normal(size=(m, n)), np.full(m, 1.0 / m)
    )
    nu = DiscreteMeasure(
        rng.normal(size=(m, n)) + 1.0,
        rng.normal(size=(m, n)) - 0.5,
        np.full(m, 1.0 / m),
    )
    return mu, nu


def random_uniform_instance(rng: np.random.Generator, m: int, n: int):
    """Uniform-weight random pair used by the oracle-dominance sweeps."""
    mu = DiscreteMeasure(
        rng.normal(size=(m, n)), rng.normal(size=(m, n)), np.full(m, 1.0 / m)
    )
    nu = DiscreteMeasure(
        rng.normal(size=(m, n)), rng.normal(size=(m, n)), np.full(m, 1.0 / m)
    )
    return mu, nu


def crossing_ensemble(T: float = 1.0) -> SplineEnsemble:
    """Two-spline ensemble engineered to collide in phase at the mid time.

    The first connector runs from (0, 1) to (1, 0). The second starts at
    (1, -1) and is chosen as the cubic through the first connector's mid-time
    state: solving the half-horizon interpolation problem and extending the
    polynomial to the full horizon forces an interior meeting with equal
    position and velocity, so the pair cannot come from an optimal coupling.
    """
    s1 = spline_from_endpoints(PhaseState([0.0], [1.0]), PhaseState([1.0], [0.0]), T)
    t_mid = 0.5 * T
    meet = PhaseState(s1.position(t_mid), s1.velocity(t_mid))
    half = spline_from_endpoints(PhaseState([1.0], [-1.0]), meet, t_mid)
    # Polynomial extension of the half-horizon cubic out to the full horizon.
    dst2 = PhaseState(half.position(T), half.velocity(T))
    s2 = spline_from_endpoints(PhaseState([1.0], [-1.0]), dst2, T)
    return SplineEnsemble(
        splines=(s1, s2),
        masses=np.array([0.5, 0.5]),
        horizon=T,
        pair_indices=((0, 0), (1, 1)),
    )
