"""Polytope geometry diagnostics: condition numbers, feasibility gaps, and
verification of the penalty-dominance condition.

The two central quantities are

* delta_condition: the largest d-th singular value among d-row submatrices of
  M that reproduce the LP optimum with a nonnegative multiplier (a measure of
  how well-posed the optimal basis is), and
* polytope_condition_number: the smallest d-th singular value among full-rank
  binding-row subsets across all vertices (how degenerate the worst vertex is).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .linalg import (
    LpParams,
    LpSolution,
    solve_lp,
    enumerate_vertices,
    smallest_singular_value,
    DimensionError,
    EnumerationCapError,
    OPTIMAL,
    UNBOUNDED,
    TAU_FEAS,
    TAU_VAL,
    TAU_RANK,
    ENUMERATION_CAP,
)

TAU_KKT = 1e-9


@dataclass
class Polytope:
    """The set {x : Mx >= c}, optionally intersected with a box."""

    M: np.ndarray
    c: np.ndarray
    box: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.M.ndim != 2 or self.c.ndim != 1 or self.M.shape[0] != self.c.shape[0]:
            raise DimensionError("M must be q x d with c of length q")

    @property
    def d(self) -> int:
        return self.M.shape[1]

    @property
    def q(self) -> int:
        return self.M.shape[0]

    def effective_system(self) -> Tuple[np.ndarray, np.ndarray]:
        """All rows including box rows, as a single (M, c) pair."""
        if self.box is None:
            return self.M, self.c
        params = LpParams(np.zeros(self.d), self.M, self.c, self.box)
        return params.effective_system(include_box=True)

    def contains(self, x: np.ndarray, tol: float = TAU_FEAS) -> bool:
        M, c = self.effective_system()
        scale = 1.0 + np.abs(c)
        return bool(np.all(M @ x - c >= -tol * scale))


@dataclass
class DeltaReport:
    j_star_sets: List[np.ndarray]
    sigma_values: List[float]
    kkt_vectors: List[np.ndarray]
    delta: float
    value: float = math.nan


def delta_condition(
    params: LpParams,
    tau_val: float = TAU_VAL,
    tau_feas: float = TAU_FEAS,
) -> DeltaReport:
    """max over optimal KKT bases J (|J| = d, rows of M only) of sigma_d(M_J).

    A basis J qualifies when M_J is invertible, x* = M_J^{-1} c_J is feasible,
    attains the LP value, and the multiplier lambda = M_J'^{-1} p is
    nonnegative. All qualifying sets are reported; delta is the largest
    sigma_d among them. An empty family signals a tolerance failure.
    """
    sol = solve_lp(params, include_box=True)
    if sol.status != OPTIMAL:
        raise ValueError(f"delta_condition needs a solvable LP, status: {sol.status}")
    d, q = params.d, params.q
    M_all, c_all = params.effective_system(include_box=True)
    scale_c = 1.0 + np.abs(c_all)
    sets: List[np.ndarray] = []
    sigmas: List[float] = []
    kkts: List[np.ndarray] = []
    n_subsets = math.comb(q, d)
    if n_subsets > ENUMERATION_CAP:
        raise EnumerationCapError(f"{n_subsets} candidate bases exceed the cap")
    for J in itertools.combinations(range(q), d):
        sub = params.M[list(J)]
        sigma = smallest_singular_value(sub)
        if sigma <= TAU_RANK * max(1.0, np.abs(sub).max()):
            continue
        x = np.linalg.solve(sub, params.c[list(J)])
        if not np.all(M_all @ x - c_all >= -tau_feas * scale_c):
            continue
        if abs(params.p @ x - sol.value) > tau_val * (1.0 + abs(sol.value)):
            continue
        lam = np.linalg.solve(sub.T, params.p)
        if np.any(lam < -tau_feas):
            continue
        sets.append(np.array(J))
        sigmas.append(sigma)
        kkts.append(lam)
    if not sets:
        raise ValueError(
            "no optimal KKT basis found among d-subsets of M rows; "
            "the optimum may be supported on box rows or tolerances failed"
        )
    return DeltaReport(
        j_star_sets=sets,
        sigma_values=sigmas,
        kkt_vectors=kkts,
        delta=max(sigmas),
        value=float(sol.value),
    )


def _is_bounded(poly: Polytope) -> bool:
    d = poly.d
    if poly.box is not None and np.all(np.isfinite(poly.box[0])) and np.all(
        np.isfinite(poly.box[1])
    ):
        return True
    box = poly.box or (np.full(d, -np.inf), np.full(d, np.inf))
    for i in range(d):
        for sense in (1.0, -1.0):
            p = np.zeros(d)
            p[i] = sense
            sol = solve_lp(LpParams(p, poly.M, poly.c, box), include_box=True)
            if sol.status == UNBOUNDED:
                return False
            if sol.status != OPTIMAL:
                raise ValueError(f"boundedness probe returned {sol.status}")
    return True


def polytope_condition_number(poly: Polytope, cap: int = ENUMERATION_CAP) -> float:
    """min over vertices, over full-rank d-subsets of binding rows, of sigma_d.

    Raw (unnormalized) rows enter the singular values. Size-d subsets suffice:
    appending rows can only increase the d-th singular value. Raises on
    unbounded or empty polytopes.
    """
    if not _is_bounded(poly):
        raise ValueError("polytope condition number requires a bounded polytope")
    d = poly.d
    box = poly.box or (np.full(d, -np.inf), np.full(d, np.inf))
    params = LpParams(np.zeros(d), poly.M, poly.c, box)
    vertices = enumerate_vertices(params, include_box=True, cap=cap)
    if not vertices:
        raise ValueError("polytope is empty (no vertices)")
    M_all, _ = poly.effective_system()
    best = math.inf
    for _, rows in vertices:
        for B in itertools.combinations(rows, d):
            sub = M_all[list(B)]
            sigma = smallest_singular_value(sub)
            if sigma > TAU_RANK * max(1.0, np.abs(sub).max()):
                best = min(best, sigma)
    if not math.isfinite(best):
        raise ValueError("no vertex has a full-rank binding set")
    return best


def l1_violation(poly: Polytope, x: np.ndarray) -> float:
    """sum_j (c_j - M_j x)^+ over all rows including box rows."""
    M, c = poly.effective_system()
    return float(np.sum(np.clip(c - M @ np.asarray(x, dtype=float), 0.0, None)))


def distance_to_polytope(
    poly: Polytope, x: np.ndarray, cap: int = ENUMERATION_CAP
) -> Tuple[float, np.ndarray]:
    """Euclidean distance from x to {Mx >= c} and the projection attaining it.

    Projects x onto the affine hull of every row subset, keeps the feasible
    projections, and returns the closest. Exact for polyhedra: the projection
    of x is the projection onto the affine hull of its active set.
    """
    x = np.asarray(x, dtype=float)
    if poly.contains(x):
        return 0.0, x.copy()
    M, c = poly.effective_system()
    q = M.shape[0]
    if 2 ** q > cap:
        raise EnumerationCapError(f"2^{q} subsets exceed the cap")
    scale_c = 1.0 + np.abs(c)
    best = math.inf
    best_z = None
    for r in range(1, min(q, poly.d) + 1):
        for J in itertools.combinations(range(q), r):
            sub, rhs = M[list(J)], c[list(J)]
            # projection onto {sub z = rhs}: x + sub' (sub sub')^+ (rhs - sub x)
            z = x + sub.T @ (np.linalg.pinv(sub @ sub.T) @ (rhs - sub @ x))
            if np.all(M @ z - c >= -TAU_FEAS * scale_c):
                dist = float(np.linalg.norm(z - x))
                if dist < best:
                    best, best_z = dist, z
    if best_z is None:
        raise ValueError("no feasible projection found; polytope may be empty")
    return best, best_z


def check_a1(params: LpParams, w: np.ndarray, tol: float = TAU_KKT) -> str:
    """Whether the penalty w strictly dominates some optimal dual vector.

    Returns "holds", "fails", or "undetermined". First tries the enumerated
    KKT multipliers from delta_condition; if none is strictly dominated,
    solves max s subject to lambda being dual-optimal and lambda_j <= w_j - s.
    An all-infinite penalty trivially dominates.
    """
    w = np.broadcast_to(np.asarray(w, dtype=float), (params.q,))
    if np.all(np.isinf(w)):
        return "holds"
    primal = solve_lp(params, include_box=True)
    if primal.status != OPTIMAL:
        raise ValueError(f"check_a1 needs a solvable LP, status: {primal.status}")
    try:
        report = delta_condition(params)
    except ValueError:
        report = None
    if report is not None:
        for J, lam in zip(report.j_star_sets, report.kkt_vectors):
            full = np.zeros(params.q)
            full[J] = lam
            if np.all(full < w - tol):
                return "holds"
    if np.any(np.isinf(w)):
        # the search LP below needs finite penalties; fall back on enumeration
        return "undetermined"
    if primal.binding is not None and np.any(primal.binding >= params.q):
        # box rows bind at the returned optimum: the dual over M rows alone
        # does not characterize the KKT set, so refuse an LP-based verdict
        return "undetermined"
    # max s  s.t.  M'lambda = p, lambda >= 0, |c'lambda - B| <= tol,
    #              lambda_j + s <= w_j.
    # Variables (lambda, s) with s free; rows as >= constraints.
    d, q = params.d, params.q
    B = float(primal.value)
    rows = []
    rhs = []
    for i in range(d):
        rows.append(np.concatenate([params.M[:, i], [0.0]]))
        rhs.append(params.p[i])
        rows.append(np.concatenate([-params.M[:, i], [0.0]]))
        rhs.append(-params.p[i])
    rows.append(np.concatenate([params.c, [0.0]]))
    rhs.append(B - tol)
    rows.append(np.concatenate([-params.c, [0.0]]))
    rhs.append(-B - tol)
    for j in range(q):
        e = np.zeros(q + 1)
        e[j] = -1.0
        e[q] = -1.0
        rows.append(e)
        rhs.append(-w[j])
    lower = np.concatenate([np.zeros(q), [-np.inf]])
    upper = np.full(q + 1, np.inf)
    obj = np.zeros(q + 1)
    obj[q] = -1.0  # maximize s
    search = LpParams(obj, np.array(rows), np.array(rhs), (lower, upper))
    sol = solve_lp(search, include_box=True)
    if sol.status != OPTIMAL:
        return "fails"
    s = -sol.value
    if s > tol:
        return "holds"
    if s < -tol:
        return "fails"
    return "undetermined"
