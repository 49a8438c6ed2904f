"""LP-value estimators: plug-in, exact penalty, debiased penalty, set expansion.

The penalty estimator minimizes L(x; theta, w) = p'x + w'(c - Mx)^+ over the
known box, computed through its relaxed-LP representation in variables (x, a):

    min p'x + w'a   s.t.  Mx + a >= c,  a >= 0,  x in X.

The debiased estimator re-optimizes p'x over the optimal face of that relaxed
LP and reports a vertex together with its binding rows; dropping the penalty
term removes the first-order bias when the penalty dominates a KKT vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import (
    LpParams,
    LpSolution,
    solve_lp,
    smallest_singular_value,
    binding_rows,
    DimensionError,
    OPTIMAL,
    TAU_RANK,
)



class PenaltyError(ValueError):
    pass


@dataclass
class PenaltyConfig:
    """Penalty vector (or the rule that selects it).

    w: explicit penalty (scalar broadcast or length-q vector); when None the
       data-driven rule of select_penalty is used.
    alpha: quantile level for the singular-value lower bound (default 0.2).
    wn_rule: growth rule for w_n: "loglog" (ln ln n / ln ln 100, floored at 1)
       or "log" (ln n / ln 100, floored at 1).
    variant: "rowwise" (row-norm aware rule, canonical) or "scalar"
       (||p|| * w_n / delta_alpha broadcast to all rows).
    """

    w: Optional[object] = None
    alpha: float = 0.2
    wn_rule: str = "loglog"
    variant: str = "rowwise"

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise PenaltyError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.wn_rule not in ("loglog", "log"):
            raise PenaltyError(f"unknown wn_rule {self.wn_rule!r}")
        if self.variant not in ("rowwise", "scalar"):
            raise PenaltyError(f"unknown variant {self.variant!r}")

    def resolve_w(self, params: LpParams, n: Optional[int] = None) -> np.ndarray:
        if self.w is not None:
            w = np.broadcast_to(np.asarray(self.w, dtype=float), (params.q,)).copy()
            if np.any(w < 0):
                raise PenaltyError("penalty vector must be nonnegative")
            return w
        if n is None:
            raise PenaltyError("no explicit penalty given and no sample size to select one")
        return select_penalty(params.M, params.p, n, self)


@dataclass
class DebiasedResult:
    value: float
    vertex: np.ndarray
    binding: np.ndarray
    penalty_residual: float
    penalized_value: float


def plug_in_value(params: LpParams) -> LpSolution:
    """B(theta-hat): the LP solved at the estimated parameters."""
    return solve_lp(params, include_box=True)


def _relaxed_params(params: LpParams, w: np.ndarray) -> LpParams:
    """The (x, a)-space LP whose value equals min_X L(x; theta, w)."""
    d, q = params.d, params.q
    p_rel = np.concatenate([params.p, w])
    M_rel = np.hstack([params.M, np.eye(q)])
    c_rel = params.c.copy()
    lower = np.concatenate([params.box[0], np.zeros(q)])
    upper = np.concatenate([params.box[1], np.full(q, np.inf)])
    return LpParams(p=p_rel, M=M_rel, c=c_rel, box=(lower, upper))


def penalty_value(params: LpParams, cfg: PenaltyConfig, n: Optional[int] = None) -> float:
    """min over the box of p'x + w'(c - Mx)^+ (always finite on a compact box)."""
    if not np.all(np.isfinite(params.box[0])) or not np.all(np.isfinite(params.box[1])):
        raise PenaltyError("penalty estimation requires a compact box")
    w = cfg.resolve_w(params, n)
    sol = solve_lp(_relaxed_params(params, w), include_box=True)
    assert sol.status == OPTIMAL  # feasible (a = (c - Mx)^+) and box-bounded
    return float(sol.value)


def debiased_estimate(
    params: LpParams,
    cfg: PenaltyConfig,
    pick: str = "max",
    n: Optional[int] = None,
) -> DebiasedResult:
    """Vertex-solution of the penalized problem with the penalty term dropped.

    Solves the relaxed LP while optimizing p'x in the `pick` direction over
    the optimal face (exact lexicographic second stage), and returns the
    resulting vertex with its binding rows.
    """
    if pick not in ("max", "min"):
        raise PenaltyError(f"pick must be 'max' or 'min', got {pick!r}")
    if not np.all(np.isfinite(params.box[0])) or not np.all(np.isfinite(params.box[1])):
        raise PenaltyError("penalized estimation requires a compact box")
    w = cfg.resolve_w(params, n)
    relaxed = _relaxed_params(params, w)
    sense = -1.0 if pick == "max" else 1.0
    secondary = np.concatenate([sense * params.p, np.zeros(params.q)])
    sol = solve_lp(relaxed, include_box=True, secondary=secondary)
    assert sol.status == OPTIMAL  # feasible (a = (c - Mx)^+) and box-bounded
    x_hat = sol.vertex[: params.d]
    binding = binding_rows(params.M, params.c, x_hat)
    residual = float(np.sum(np.clip(params.c - params.M @ x_hat, 0.0, None)))
    return DebiasedResult(
        value=float(params.p @ x_hat),
        vertex=x_hat,
        binding=binding,
        penalty_residual=residual,
        penalized_value=float(sol.value),
    )


def full_rank_binding(M: np.ndarray, binding: np.ndarray) -> bool:
    """Whether the binding rows of M span R^d within the rank tolerance."""
    d = M.shape[1]
    if binding.size < d:
        return False
    sub = M[binding]
    scale = max(1.0, float(np.abs(sub).max()))
    return smallest_singular_value(sub) > TAU_RANK * scale * 10.0


def default_kappa_n(n: int, kappa0: float = 0.1) -> float:
    """Default expansion level: kappa_n = kappa0 * (ln ln n)^2, so that
    sqrt(kappa_n) grows proportionally to ln ln n."""
    if n < 3:
        raise PenaltyError("n must be at least 3 for ln ln n")
    return kappa0 * math.log(math.log(n)) ** 2


def set_expansion_value(params: LpParams, kappa_n: float, n: int) -> LpSolution:
    """LP with the right-hand side relaxed by sqrt(kappa_n / n)."""
    if kappa_n < 0:
        raise PenaltyError("kappa_n must be nonnegative")
    eps = math.sqrt(kappa_n / n)
    expanded = LpParams(p=params.p, M=params.M, c=params.c - eps, box=params.box)
    return solve_lp(expanded, include_box=True)


def tao_vu_quantile(alpha: float) -> float:
    """delta_alpha with 1 - exp(-delta/2 - sqrt(delta)) = alpha."""
    if not (0.0 < alpha < 1.0):
        raise PenaltyError(f"alpha must lie in (0,1), got {alpha}")
    return (math.sqrt(1.0 - 2.0 * math.log1p(-alpha)) - 1.0) ** 2


def _wn(n: int, rule: str) -> float:
    if n < 3:
        raise PenaltyError("n must be at least 3 so ln ln n is defined")
    if rule == "loglog":
        return max(1.0, math.log(math.log(n)) / math.log(math.log(100.0)))
    return max(1.0, math.log(n) / math.log(100.0))


def select_penalty(
    m_hat: np.ndarray,
    p: np.ndarray,
    n: int,
    cfg: Optional[PenaltyConfig] = None,
    augmented: bool = False,
) -> np.ndarray:
    """Data-driven penalty vector w_j = w_n * d * ||p|| / (delta_alpha * ||M_j||).

    With augmented=True, returns (1, w')' for the value-as-variable LP
    augmentation (the leading row t >= p'x needs no penalty beyond 1).
    """
    M = np.asarray(m_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    if M.ndim != 2 or p.ndim != 1 or M.shape[1] != p.shape[0]:
        raise DimensionError("m_hat must be q x d with p of length d")
    cfg = cfg or PenaltyConfig()
    row_norms = np.linalg.norm(M, axis=1)
    if np.any(row_norms <= 0.0):
        bad = int(np.flatnonzero(row_norms <= 0.0)[0])
        raise PenaltyError(
            f"row {bad} of M has zero norm; drop or renormalize it before selecting a penalty"
        )
    d = M.shape[1]
    wn = _wn(n, cfg.wn_rule)
    delta = tao_vu_quantile(cfg.alpha)
    if cfg.variant == "scalar":
        w = np.full(M.shape[0], wn * float(np.linalg.norm(p)) / delta)
    else:
        w = wn * d * float(np.linalg.norm(p)) / (delta * row_norms)
    if augmented:
        return np.concatenate([[1.0], w])
    return w


def select_v_bar(m_hat: np.ndarray, p: np.ndarray, alpha: float = 0.1) -> float:
    """Radius bound v_bar = d * ||p|| / (min_j ||M_j|| * delta_alpha)."""
    M = np.asarray(m_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    if M.ndim != 2 or p.ndim != 1 or M.shape[1] != p.shape[0]:
        raise DimensionError("m_hat must be q x d with p of length d")
    row_norms = np.linalg.norm(M, axis=1)
    if np.any(row_norms <= 0.0):
        raise PenaltyError("all rows of M must have positive norm")
    return M.shape[1] * float(np.linalg.norm(p)) / (float(row_norms.min()) * tao_vu_quantile(alpha))
