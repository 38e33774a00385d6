"""Particle-level kinetics on phase space.

A phase state is a pair (x, v) of position and velocity in R^n. The module
provides the cubic connector that minimises the time-weighted squared
acceleration between two states, the induced fixed-horizon discrepancy and its
time-optimised variants, free transport, and a one-sided derivative estimator
for curves of states.

All functions are pure; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhaseState",
    "CubicSpline",
    "OptimalTime",
    "ZeroClassification",
    "spline_from_endpoints",
    "spline_eval",
    "spline_action",
    "tilde_dT_sq",
    "optimal_time_point",
    "tilde_d_sq",
    "d_sq",
    "free_transport",
    "classify_zero",
    "curve_d_derivative",
]


def _as_vector(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PhaseState:
    """A point (x, v) of phase space: position and velocity of equal dimension."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))
        object.__setattr__(self, "v", _as_vector(self.v))
        if self.x.shape != self.v.shape:
            raise ValueError(
                f"position and velocity dimensions differ: {self.x.shape} vs {self.v.shape}"
            )
        if self.x.size < 1:
            raise ValueError("phase state must have dimension >= 1")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise ValueError("phase state entries must be finite")

    @property
    def dim(self) -> int:
        return self.x.size


# Positional tolerance for the x == y branch switch.  The switch in the
# closed-form discrepancies is discontinuous, so the decision must be
# deterministic and scale-aware.
def _eps_x(x: np.ndarray, y: np.ndarray) -> float:
    return 1e-12 * (1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(y)))


@dataclass(frozen=True)
class OptimalTime:
    """Three-way tag for the cost-minimising horizon: zero, finite, or infinite.

    The tag is explicit; no sentinel float values are used. A finite tag always
    carries a strictly positive horizon.
    """

    kind: str  # "zero" | "finite" | "infinite"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "finite", "infinite"):
            raise ValueError(f"unknown optimal-time kind {self.kind!r}")
        if self.kind == "finite":
            if self.value is None or not self.value > 0:
                raise ValueError("finite optimal time must carry a positive value")
        elif self.value is not None:
            raise ValueError(f"{self.kind!r} optimal time carries no value")

    @staticmethod
    def zero() -> "OptimalTime":
        return OptimalTime("zero")

    @staticmethod
    def finite(T: float) -> "OptimalTime":
        return OptimalTime("finite", float(T))

    @staticmethod
    def infinite() -> "OptimalTime":
        return OptimalTime("infinite")

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"


@dataclass(frozen=True)
class CubicSpline:
    """Degree-3 polynomial trajectory ``t -> a3 t^3 + a2 t^2 + a1 t + a0`` on [0, T].

    This is the unique minimiser of ``T * integral |alpha''|^2`` among H^2
    curves with prescribed endpoint states; its acceleration is affine in t.
    """

    a3: np.ndarray
    a2: np.ndarray
    a1: np.ndarray
    a0: np.ndarray
    horizon: float

    def __post_init__(self):
        for name in ("a3", "a2", "a1", "a0"):
            object.__setattr__(self, name, _as_vector(getattr(self, name)))
        if not self.horizon > 0:
            raise ValueError("spline horizon must be positive")
        n = self.a0.size
        if any(getattr(self, name).size != n for name in ("a3", "a2", "a1")):
            raise ValueError("spline coefficients have inconsistent dimensions")

    @property
    def dim(self) -> int:
        return self.a0.size

    def position(self, t: float) -> np.ndarray:
        return ((self.a3 * t + self.a2) * t + self.a1) * t + self.a0

    def velocity(self, t: float) -> np.ndarray:
        return (3.0 * self.a3 * t + 2.0 * self.a2) * t + self.a1

    def acceleration(self, t: float) -> np.ndarray:
        return 6.0 * self.a3 * t + 2.0 * self.a2


def spline_from_endpoints(src: PhaseState, dst: PhaseState, T: float) -> CubicSpline:
    """Minimal-acceleration cubic from ``src`` at time 0 to ``dst`` at time T.

    Coefficients follow from the boundary conditions together with the
    Euler-Lagrange equation alpha'''' = 0.
    """
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if src.dim != dst.dim:
        raise ValueError(f"dimension mismatch: {src.dim} vs {dst.dim}")
    x, v = src.x, src.v
    y, w = dst.x, dst.v
    T = float(T)
    a3 = (v + w) / T**2 - 2.0 * (y - x) / T**3
    a2 = 3.0 * (y - x) / T**2 - (2.0 * v + w) / T
    return CubicSpline(a3=a3, a2=a2, a1=v.copy(), a0=x.copy(), horizon=T)


def spline_eval(s: CubicSpline, t: float) -> PhaseState:
    """State (alpha(t), alpha'(t)) of the spline, for t in [0, T]."""
    if not (-1e-12 * s.horizon <= t <= s.horizon * (1.0 + 1e-12)):
        raise ValueError(f"time {t} outside spline horizon [0, {s.horizon}]")
    return PhaseState(s.position(t), s.velocity(t))


def spline_action(s: CubicSpline) -> float:
    """Closed form of ``T * integral_0^T |alpha''(t)|^2 dt``.

    With alpha'' = 6 a3 t + 2 a2 the integrand is quadratic, so the integral is
    12 |a3|^2 T^3 + 12 (a3 . a2) T^2 + 4 |a2|^2 T.  The value coincides with
    ``tilde_dT_sq`` of the endpoint states.
    """
    T = s.horizon
    q33 = float(np.dot(s.a3, s.a3))
    q32 = float(np.dot(s.a3, s.a2))
    q22 = float(np.dot(s.a2, s.a2))
    return T * (12.0 * q33 * T**3 + 12.0 * q32 * T**2 + 4.0 * q22 * T)


def tilde_dT_sq(src: PhaseState, dst: PhaseState, T: float) -> float:
    """Squared fixed-horizon discrepancy: 12 |(y-x)/T - (v+w)/2|^2 + |w-v|^2."""
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if src.dim != dst.dim:
        raise ValueError(f"dimension mismatch: {src.dim} vs {dst.dim}")
    drift = (dst.x - src.x) / float(T) - 0.5 * (src.v + dst.v)
    dv = dst.v - src.v
    return 12.0 * float(np.dot(drift, drift)) + float(np.dot(dv, dv))


def optimal_time_point(src: PhaseState, dst: PhaseState) -> OptimalTime:
    """Horizon minimising ``T -> tilde_dT_sq(src, dst, T)`` over T > 0.

    Finite(2 |y-x|^2 / ((y-x).(v+w))) when the dot product is positive; zero by
    convention when y = x; infinite otherwise (the infimum is only approached
    as T grows).
    """
    gap = dst.x - src.x
    gap_sq = float(np.dot(gap, gap))
    if np.sqrt(gap_sq) <= _eps_x(src.x, dst.x):
        return OptimalTime.zero()
    dot = float(np.dot(gap, src.v + dst.v))
    if dot > 0.0:
        return OptimalTime.finite(2.0 * gap_sq / dot)
    return OptimalTime.infinite()


def tilde_d_sq(src: PhaseState, dst: PhaseState) -> float:
    """Infimum over T > 0 of ``tilde_dT_sq``, in closed form.

    For x != y: 3 |v+w|^2 - 3 ((u.(v+w))_+)^2 + |w-v|^2 with u the unit vector
    from x to y; for x = y: 3 |v+w|^2 + |w-v|^2.  The clamped branch is also
    the analytic T -> infinity limit, which applies whenever the optimal time
    is not finite.
    """
    if src.dim != dst.dim:
        raise ValueError(f"dimension mismatch: {src.dim} vs {dst.dim}")
    vw = src.v + dst.v
    dv = dst.v - src.v
    base = 3.0 * float(np.dot(vw, vw)) + float(np.dot(dv, dv))
    gap = dst.x - src.x
    gap_norm = float(np.linalg.norm(gap))
    if gap_norm <= _eps_x(src.x, dst.x):
        return base
    aligned = max(float(np.dot(gap, vw)) / gap_norm, 0.0)
    return base - 3.0 * aligned * aligned


def d_sq(src: PhaseState, dst: PhaseState) -> float:
    """Squared second-order discrepancy (lower-semicontinuous envelope of tilde).

    Identical to ``tilde_d_sq`` when x != y, and |w-v|^2 when x = y.
    """
    if src.dim != dst.dim:
        raise ValueError(f"dimension mismatch: {src.dim} vs {dst.dim}")
    gap = dst.x - src.x
    if float(np.linalg.norm(gap)) <= _eps_x(src.x, dst.x):
        dv = dst.v - src.v
        return float(np.dot(dv, dv))
    return tilde_d_sq(src, dst)


def free_transport(s: PhaseState, T: float) -> PhaseState:
    """Drift map (x, v) -> (x + T v, v); the zero-cost motion for T >= 0."""
    if T < 0:
        raise ValueError(f"free transport requires T >= 0, got {T}")
    return PhaseState(s.x + float(T) * s.v, s.v.copy())


@dataclass(frozen=True)
class ZeroClassification:
    """Outcome of the zero-discrepancy classification for a pair of states.

    kind is one of "free_transport" (with the transport time), "both_rest"
    (distinct positions, both velocities below tolerance), or "positive"
    (with the squared discrepancy).
    """

    kind: str
    T: float | None = None
    value: float | None = None


def classify_zero(src: PhaseState, dst: PhaseState, tol: float) -> ZeroClassification:
    """Decide whether the pair lies in one of the zero-discrepancy classes.

    The candidate transport time comes from the closed form
    T = (y-x).v / |v|^2 (the drift condition is affine in T, so no root
    finding is needed) and is then verified coordinate-wise within ``tol``.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if src.dim != dst.dim:
        raise ValueError(f"dimension mismatch: {src.dim} vs {dst.dim}")
    gap = dst.x - src.x
    speed_sq = float(np.dot(src.v, src.v))
    if speed_sq > tol * tol:
        T = float(np.dot(gap, src.v)) / speed_sq
        T = max(T, 0.0)
        img = free_transport(src, T)
        if (
            float(np.max(np.abs(dst.x - img.x))) <= tol
            and float(np.max(np.abs(dst.v - img.v))) <= tol
        ):
            return ZeroClassification("free_transport", T=T)
    else:
        # v ~ 0: free transport degenerates to the identity.
        if (
            float(np.max(np.abs(gap))) <= tol
            and float(np.max(np.abs(dst.v - src.v))) <= tol
        ):
            return ZeroClassification("free_transport", T=0.0)
    if (
        float(np.linalg.norm(gap)) > tol
        and float(np.linalg.norm(src.v)) <= tol
        and float(np.linalg.norm(dst.v)) <= tol
    ):
        return ZeroClassification("both_rest")
    return ZeroClassification("positive", value=d_sq(src, dst))


def curve_d_derivative(
    samples: list[tuple[float, PhaseState]],
    t: float,
    h_list: list[float],
) -> list[float]:
    """Forward difference ratios d(gamma(t), gamma(t+h)) / h for each h.

    Only forward offsets are used: the discrepancy is asymmetric and its
    derivative along a curve is a one-sided limit.  Each requested time must
    match a sample time; ratios converge to |dv/dt| for curves whose position
    moves along the instantaneous velocity.
    """
    if not h_list:
        return []
    if any(h <= 0 for h in h_list):
        raise ValueError("offsets must be positive")
    times = np.asarray([float(s[0]) for s in samples])
    span = max(abs(t), abs(t + max(h_list)), 1.0)
    tol = 1e-9 * span

    def state_at(target: float) -> PhaseState:
        idx = int(np.argmin(np.abs(times - target)))
        if abs(times[idx] - target) > tol:
            raise ValueError(
                f"insufficient samples: no sample at time {target} (closest {times[idx]})"
            )
        return samples[idx][1]

    base = state_at(t)
    return [np.sqrt(d_sq(base, state_at(t + h))) / h for h in h_list]
