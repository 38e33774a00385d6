"""Discrete probability measures on phase space, couplings, and plan moments.

A measure is a weighted point cloud of phase states; weights are positive and
sum to one. Couplings are dense nonnegative matrices with prescribed
marginals. Every plan-level cost downstream factors through the four moments
(A, B, C, D) computed here.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .phase import PhaseState

__all__ = [
    "DiscreteMeasure",
    "Coupling",
    "PlanMoments",
    "CouplingReport",
    "validate_measure",
    "measure_from_json",
    "measure_to_json",
    "measure_from_csv",
    "measure_to_csv",
    "load_measure",
    "product_coupling",
    "plan_moments",
    "check_coupling",
    "w2_sq",
    "pushforward_free_transport",
    "match_weighted_point_sets",
    "group_by_position",
]

WEIGHT_SUM_TOL = 1e-6
MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atoms on phase space, stored as (m, n) position/velocity arrays."""

    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.positions, dtype=float))
        V = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "positions", X)
        object.__setattr__(self, "velocities", V)
        object.__setattr__(self, "weights", w)
        if X.shape != V.shape:
            raise ValueError(f"position/velocity shapes differ: {X.shape} vs {V.shape}")
        if X.shape[0] != w.size:
            raise ValueError("number of weights does not match number of atoms")
        if w.size == 0:
            raise ValueError("measure must contain at least one atom")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(V)):
            raise ValueError("atom coordinates must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(float(w.sum()) - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    def atom(self, i: int) -> PhaseState:
        return PhaseState(self.positions[i], self.velocities[i])

    def velocity_norm_sq(self) -> float:
        """Mass-weighted squared velocity norm."""
        return float(np.sum(self.weights * np.sum(self.velocities**2, axis=1)))

    def position_norm_sq(self) -> float:
        return float(np.sum(self.weights * np.sum(self.positions**2, axis=1)))

    def mean_velocity(self) -> np.ndarray:
        """Total momentum (mass-weighted mean of v)."""
        return np.asarray(self.weights @ self.velocities, dtype=float)


def validate_measure(raw) -> DiscreteMeasure:
    """Build a measure from parsed data, rescaling near-unit weight sums.

    ``raw`` is either a dict with keys ``dim`` and ``points`` (each point a
    dict with ``x``, ``v``, ``w``) or a triple of arrays. Weight sums within
    1e-6 of 1 are renormalised; larger deviations are rejected.
    """
    if isinstance(raw, dict):
        dim = int(raw["dim"])
        pts = raw.get("points", [])
        if not pts:
            raise ValueError("measure has no atoms")
        X, V, w = [], [], []
        for p in pts:
            x = np.asarray(p["x"], dtype=float).ravel()
            v = np.asarray(p["v"], dtype=float).ravel()
            if x.size != dim or v.size != dim:
                raise ValueError(
                    f"atom dimension {x.size}/{v.size} does not match dim={dim}"
                )
            X.append(x)
            V.append(v)
            w.append(float(p["w"]))
        X, V, w = np.asarray(X), np.asarray(V), np.asarray(w)
    else:
        X, V, w = raw
        X = np.atleast_2d(np.asarray(X, dtype=float))
        V = np.atleast_2d(np.asarray(V, dtype=float))
        w = np.asarray(w, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("measure has no atoms")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    total = float(w.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"weights sum to {total}, more than {WEIGHT_SUM_TOL} from 1")
    return DiscreteMeasure(X, V, w / total)


def measure_from_json(text: str) -> DiscreteMeasure:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed measure JSON: {exc}") from exc
    if not isinstance(raw, dict) or "dim" not in raw or "points" not in raw:
        raise ValueError("measure JSON must be an object with 'dim' and 'points'")
    return validate_measure(raw)


def measure_to_json(mu: DiscreteMeasure) -> dict:
    return {
        "dim": mu.dim,
        "points": [
            {
                "x": [float(c) for c in mu.positions[i]],
                "v": [float(c) for c in mu.velocities[i]],
                "w": float(mu.weights[i]),
            }
            for i in range(mu.size)
        ],
    }


def measure_from_csv(text: str) -> DiscreteMeasure:
    """Parse the CSV layout ``x1..xn,v1..vn,w``, one atom per row."""
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError("measure CSV needs a header and at least one atom row")
    header = [c.strip() for c in rows[0]]
    n_x = sum(1 for c in header if c.startswith("x"))
    n_v = sum(1 for c in header if c.startswith("v"))
    if n_x < 1 or n_x != n_v or header[-1] != "w" or len(header) != 2 * n_x + 1:
        raise ValueError(f"unexpected measure CSV header {header!r}")
    X, V, w = [], [], []
    for r in rows[1:]:
        if len(r) != len(header):
            raise ValueError(f"CSV row has {len(r)} fields, expected {len(header)}")
        vals = [float(c) for c in r]
        X.append(vals[:n_x])
        V.append(vals[n_x : 2 * n_x])
        w.append(vals[-1])
    return validate_measure((np.asarray(X), np.asarray(V), np.asarray(w)))


def measure_to_csv(mu: DiscreteMeasure) -> str:
    n = mu.dim
    header = [f"x{i+1}" for i in range(n)] + [f"v{i+1}" for i in range(n)] + ["w"]
    lines = [",".join(header)]
    for i in range(mu.size):
        row = (
            [format(c, ".17g") for c in mu.positions[i]]
            + [format(c, ".17g") for c in mu.velocities[i]]
            + [format(float(mu.weights[i]), ".17g")]
        )
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def load_measure(path: str, fmt: str = "json") -> DiscreteMeasure:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if fmt == "json":
        return measure_from_json(text)
    if fmt == "csv":
        return measure_from_csv(text)
    raise ValueError(f"unknown measure format {fmt!r}")


@dataclass(frozen=True)
class Coupling:
    """Dense m x k transport plan between two measures.

    Entries are clipped to zero from above -1e-12; row sums must match the
    source weights and column sums the target weights within 1e-9.
    """

    P: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape != (self.source.size, self.target.size):
            raise ValueError(
                f"plan shape {P.shape} does not match marginals "
                f"({self.source.size}, {self.target.size})"
            )
        if float(P.min(initial=0.0)) < -1e-12:
            raise ValueError(f"plan has negative mass {P.min()}")
        P = np.clip(P, 0.0, None)
        object.__setattr__(self, "P", P)
        row_err = float(np.max(np.abs(P.sum(axis=1) - self.source.weights)))
        col_err = float(np.max(np.abs(P.sum(axis=0) - self.target.weights)))
        if max(row_err, col_err) > MARGINAL_TOL:
            raise ValueError(
                f"marginal violation {max(row_err, col_err):.3e} exceeds {MARGINAL_TOL}"
            )


@dataclass(frozen=True)
class PlanMoments:
    """The four cost moments of a coupling.

    A = mean squared position gap, B = mean inner product of gap with velocity
    sum, C = mean squared velocity sum, D = mean squared velocity difference.
    ``pos_scale_sq`` (second position moments of the marginals) is carried
    only to set the branch guard for the division by A.
    """

    A: float
    B: float
    C: float
    D: float
    pos_scale_sq: float = 0.0

    def __post_init__(self):
        if min(self.A, self.C, self.D) < -1e-12:
            raise ValueError("moments A, C, D must be nonnegative")
        cs = np.sqrt(max(self.A, 0.0) * max(self.C, 0.0))
        if abs(self.B) > cs + 1e-9 * (1.0 + cs):
            raise ValueError(f"|B|={abs(self.B)} violates Cauchy-Schwarz bound {cs}")

    @property
    def eps_A(self) -> float:
        """Threshold under which the coupling is treated as position-preserving."""
        return 1e-14 * (1.0 + self.pos_scale_sq)


def product_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """Independence coupling P[i, j] = w_i u_j."""
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    return Coupling(np.outer(mu.weights, nu.weights), mu, nu)


def plan_moments(mu: DiscreteMeasure, nu: DiscreteMeasure, plan: Coupling) -> PlanMoments:
    """Exact weighted sums of the four pairwise cost ingredients."""
    if plan.P.shape != (mu.size, nu.size):
        raise ValueError("coupling does not match the given measures")
    P = plan.P
    gap = nu.positions[None, :, :] - mu.positions[:, None, :]
    vsum = nu.velocities[None, :, :] + mu.velocities[:, None, :]
    vdiff = nu.velocities[None, :, :] - mu.velocities[:, None, :]
    A = float(np.sum(P * np.sum(gap * gap, axis=2)))
    B = float(np.sum(P * np.sum(gap * vsum, axis=2)))
    C = float(np.sum(P * np.sum(vsum * vsum, axis=2)))
    D = float(np.sum(P * np.sum(vdiff * vdiff, axis=2)))
    scale = mu.position_norm_sq() + nu.position_norm_sq()
    return PlanMoments(A=A, B=B, C=C, D=D, pos_scale_sq=scale)


@dataclass(frozen=True)
class CouplingReport:
    max_marginal_violation: float
    min_entry: float


def check_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure, P: np.ndarray) -> CouplingReport:
    """Report the worst marginal violation and the smallest entry of a matrix."""
    P = np.asarray(P, dtype=float)
    row_err = float(np.max(np.abs(P.sum(axis=1) - mu.weights)))
    col_err = float(np.max(np.abs(P.sum(axis=0) - nu.weights)))
    return CouplingReport(
        max_marginal_violation=max(row_err, col_err),
        min_entry=float(P.min()),
    )


def w2_sq(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact squared 2-Wasserstein distance with cost |x-y|^2 + |v-w|^2."""
    from .lp import min_cost_plan

    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    gap_x = mu.positions[:, None, :] - nu.positions[None, :, :]
    gap_v = mu.velocities[:, None, :] - nu.velocities[None, :, :]
    cost = np.sum(gap_x * gap_x, axis=2) + np.sum(gap_v * gap_v, axis=2)
    P = min_cost_plan(cost, mu.weights, nu.weights)
    return float(np.sum(P * cost))


def pushforward_free_transport(mu: DiscreteMeasure, T: float) -> DiscreteMeasure:
    """Image of the measure under the drift map (x, v) -> (x + T v, v)."""
    if T < 0:
        raise ValueError(f"free transport requires T >= 0, got {T}")
    return DiscreteMeasure(
        mu.positions + float(T) * mu.velocities,
        mu.velocities.copy(),
        mu.weights.copy(),
    )


def _lex_order(points: np.ndarray) -> np.ndarray:
    return np.lexsort(points.T[::-1])


def match_weighted_point_sets(
    pts_a: np.ndarray,
    w_a: np.ndarray,
    pts_b: np.ndarray,
    w_b: np.ndarray,
    tol: float,
) -> list[tuple[int, int]] | None:
    """Greedy matching of two weighted point sets within per-coordinate ``tol``.

    Points are visited in lexicographic order (deterministic tie-breaking);
    each point of the first set is matched to the first unused point of the
    second set within tolerance and with equal weight within max(tol, 1e-9).
    Returns index pairs, or None if the sets do not coincide.
    """
    pts_a = np.atleast_2d(pts_a)
    pts_b = np.atleast_2d(pts_b)
    if pts_a.shape[0] != pts_b.shape[0] or pts_a.shape[1] != pts_b.shape[1]:
        return None
    order_a = _lex_order(pts_a)
    order_b = list(_lex_order(pts_b))
    w_tol = max(tol, 1e-9)
    pairs: list[tuple[int, int]] = []
    used = set()
    for ia in order_a:
        found = None
        for ib in order_b:
            if ib in used:
                continue
            if float(np.max(np.abs(pts_a[ia] - pts_b[ib]))) <= tol and (
                abs(float(w_a[ia]) - float(w_b[ib])) <= w_tol
            ):
                found = ib
                break
        if found is None:
            return None
        used.add(found)
        pairs.append((int(ia), int(found)))
    return pairs


def group_by_position(mu: DiscreteMeasure, tol: float) -> list[tuple[np.ndarray, list[int]]]:
    """Cluster atom indices by coincident positions (within ``tol``), in lex order."""
    order = _lex_order(mu.positions)
    groups: list[tuple[np.ndarray, list[int]]] = []
    for i in order:
        placed = False
        for site, members in groups:
            if float(np.max(np.abs(mu.positions[i] - site))) <= tol:
                members.append(int(i))
                placed = True
                break
        if not placed:
            groups.append((mu.positions[i].copy(), [int(i)]))
    return groups
