"""Split-sample inference on the LP value.

Pipeline: split the sample into two folds; on fold 1, estimate a vertex of the
debiased penalty estimator together with its binding set and a ball-constrained
least-squares dual weight; on fold 2, evaluate the bias-corrected linear
statistic and its standard error; report one- and two-sided intervals.

Parameter vectors are ordered (p, vec(M) column-major, c), of total length
S = d + q*d + q; covariance matrices follow the same ordering, with the p
block identically zero when p is deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Optional, Tuple

import numpy as np

from .linalg import LpParams, DimensionError
from .estimators import (
    PenaltyConfig,
    debiased_estimate,
    full_rank_binding,
    select_v_bar,
)

_PSD_TOL = 1e-8
_VAR_CLIP = -1e-10


class InferenceError(ValueError):
    pass


@dataclass
class ThetaEstimate:
    """Estimated LP parameters with an optional covariance of the estimate.

    sigma is the S x S covariance of the full parameter vector in the
    (p, vec M, c) ordering, scaled so that theta_hat ~ (theta, sigma / n).
    """

    params: LpParams
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            S = self.params.d + self.params.q * self.params.d + self.params.q
            if self.sigma.shape != (S, S):
                raise DimensionError(
                    f"sigma must be {S}x{S} for (q,d)=({self.params.q},{self.params.d})"
                )


# A ThetaEstimator maps a subset of observation indices to a ThetaEstimate.
# It must be deterministic given the subset.
ThetaEstimator = Callable[[np.ndarray], ThetaEstimate]


@dataclass
class OptimalTriplet:
    A: np.ndarray  # binding M-row indices, |A| >= d
    x: np.ndarray  # point in R^d
    v: np.ndarray  # vector in R^q, support within A


@dataclass
class InferenceResult:
    estimate: float
    se: float
    ci_lower_onesided: float  # [ci_lower_onesided, +inf)
    ci_upper_onesided: float  # (-inf, ci_upper_onesided]
    ci_twosided: Tuple[float, float]
    triplet: OptimalTriplet
    n1: int
    n2: int
    degenerate_variance: bool = False


@dataclass
class InferenceConfig:
    gamma: float = 0.5
    alpha: float = 0.05
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    v_bar: Optional[float] = None  # None -> select_v_bar on fold-1 estimates
    v_bar_alpha: float = 0.1
    sigma_source: str = "analytic"  # "analytic" | "bootstrap"
    sigma_min: float = 0.0
    bootstrap_reps: int = 500

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise InferenceError(f"gamma must lie in (0,1), got {self.gamma}")
        if not (0.0 < self.alpha < 1.0):
            raise InferenceError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.sigma_source not in ("analytic", "bootstrap"):
            raise InferenceError(f"unknown sigma_source {self.sigma_source!r}")
        if self.sigma_min < 0:
            raise InferenceError("sigma_min must be nonnegative")


def split_sample(n: int, gamma: float, seed) -> Tuple[np.ndarray, np.ndarray]:
    """Random disjoint exhaustive folds of sizes (floor(gamma*n), rest)."""
    if n < 2:
        raise InferenceError("need at least 2 observations to split")
    if not (0.0 < gamma < 1.0):
        raise InferenceError(f"gamma must lie in (0,1), got {gamma}")
    n1 = int(math.floor(gamma * n))
    if n1 == 0 or n1 == n:
        raise InferenceError(f"degenerate fold sizes ({n1}, {n - n1})")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def ball_constrained_lstsq(
    mat: np.ndarray, rhs: np.ndarray, radius: float
) -> np.ndarray:
    """argmin_v ||rhs - mat'v||^2 subject to ||v|| <= radius.

    Unconstrained minimum-norm solution first; when it violates the ball,
    bisection on the Lagrange multiplier mu of the trust-region subproblem
    v(mu) = (mat mat' + mu I)^{-1} mat rhs (50 iterations, tolerance 1e-12).
    """
    if radius <= 0:
        raise InferenceError("radius must be positive")
    mat = np.asarray(mat, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    v0, *_ = np.linalg.lstsq(mat.T, rhs, rcond=None)
    if np.linalg.norm(v0) <= radius:
        return v0
    gram = mat @ mat.T
    b = mat @ rhs
    k = gram.shape[0]

    def norm_at(mu: float) -> Tuple[float, np.ndarray]:
        v = np.linalg.solve(gram + mu * np.eye(k), b)
        return float(np.linalg.norm(v)), v

    lo = 0.0
    hi = 1.0
    while norm_at(hi)[0] > radius:
        hi *= 2.0
        if hi > 1e30:
            raise InferenceError("trust-region bisection failed to bracket")
    v = v0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        nrm, v = norm_at(mid)
        if abs(nrm - radius) <= 1e-12:
            break
        if nrm > radius:
            lo = mid
        else:
            hi = mid
    return v


def find_triplet(
    theta1: LpParams, w: np.ndarray, v_bar: float
) -> OptimalTriplet:
    """Fold-1 triplet: debiased vertex, its binding set, and dual weights."""
    cfg = PenaltyConfig(w=w)
    result = debiased_estimate(theta1, cfg, pick="max")
    A = result.binding
    if not full_rank_binding(theta1.M, A):
        raise InferenceError(
            "no full-rank vertex-solution found on fold 1: binding rows "
            f"{A.tolist()} do not span R^{theta1.d}; include box rows in M "
            "or increase the penalty"
        )
    v_A = ball_constrained_lstsq(theta1.M[A], theta1.p, v_bar)
    v = np.zeros(theta1.q)
    v[A] = v_A
    return OptimalTriplet(A=A, x=result.vertex, v=v)


def _selectors(q: int, d: int, A: np.ndarray):
    """Selector matrices for the (p, vec M, c) parameter ordering."""
    S = d + q * d + q
    C_c = np.zeros((q, S))
    C_c[:, d + q * d:] = np.eye(q)
    C_M = np.zeros((q * d, S))
    C_M[:, d: d + q * d] = np.eye(q * d)
    C_A = np.zeros((len(A), q))
    for i, a in enumerate(A):
        C_A[i, a] = 1.0
    return C_c, C_M, C_A


def asymptotic_variance(
    A: np.ndarray, x: np.ndarray, v: np.ndarray, Sigma: np.ndarray
) -> float:
    """Variance of v_A'(c_A - M_A x) under theta ~ (theta_0, Sigma).

    Closed form sigma^2 = J1 S J1' - 2 J2 (I_d (x) C_M S J1') x
    + J2 (x x' (x) C_M S C_M') J2' with J1 = v_A' C(A) C_c and
    J2 = v_A' C(A) (vec(I_d)' (x) I_q).
    """
    A = np.asarray(A, dtype=int)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    d = x.shape[0]
    q = v.shape[0]
    S = d + q * d + q
    if Sigma.shape != (S, S):
        raise DimensionError(f"Sigma must be {S}x{S}, got {Sigma.shape}")
    if not np.allclose(Sigma, Sigma.T, atol=_PSD_TOL):
        raise InferenceError("Sigma must be symmetric")
    scale = max(1.0, float(np.abs(Sigma).max()))
    evals = np.linalg.eigvalsh(0.5 * (Sigma + Sigma.T))
    if evals.min() < -_PSD_TOL * scale:
        raise InferenceError(f"Sigma is not PSD (min eigenvalue {evals.min():.3e})")
    C_c, C_M, C_A = _selectors(q, d, A)
    v_A = v[A]
    J1 = v_A @ C_A @ C_c  # 1 x S
    J2 = v_A @ C_A @ np.kron(np.eye(d).flatten(order="F")[None, :], np.eye(q))
    SJ1 = Sigma @ J1  # S
    term1 = float(J1 @ SJ1)
    term2 = -2.0 * float(J2 @ np.kron(np.eye(d), (C_M @ SJ1)[:, None]) @ x)
    mid = C_M @ Sigma @ C_M.T
    term3 = float(J2 @ np.kron(np.outer(x, x), mid) @ J2)
    var = term1 + term2 + term3
    if var < _VAR_CLIP * scale:
        raise InferenceError(f"variance formula returned {var:.3e} < clip threshold")
    return max(var, 0.0)


def bootstrap_se(
    theta2_resampler: Callable[[int], LpParams],
    A: np.ndarray,
    x: np.ndarray,
    v: np.ndarray,
    B: int,
    seed,
    n2: int = 1,
    center: Optional[float] = None,
) -> float:
    """sqrt(n2) * RMS deviation of v_A'(c*_A - M*_A x) across B resamples.

    theta2_resampler(b) must return the b-th bootstrap re-estimate of the
    fold-2 parameters. Deviations are taken from `center` (default: the mean
    of the bootstrap draws), matching the fold-2 point estimate when given.
    """
    if B < 100:
        raise InferenceError(f"bootstrap needs B >= 100 replications, got {B}")
    A = np.asarray(A, dtype=int)
    v_A = np.asarray(v, dtype=float)[A]
    draws = np.empty(B)
    for b in range(B):
        theta_b = theta2_resampler(b)
        draws[b] = v_A @ (theta_b.c[A] - theta_b.M[A] @ x)
    if center is None:
        center = float(draws.mean())
    return math.sqrt(n2) * math.sqrt(float(np.mean((draws - center) ** 2)))


def run_inference(
    data_handle,
    estimator: ThetaEstimator,
    cfg: InferenceConfig,
    seed,
) -> InferenceResult:
    """Full split-sample procedure.

    data_handle: either an integer sample size or an object with __len__;
    the estimator receives index subsets into it.
    """
    n = data_handle if isinstance(data_handle, int) else len(data_handle)
    fold1, fold2 = split_sample(n, cfg.gamma, seed)
    n1, n2 = len(fold1), len(fold2)

    est1 = estimator(fold1)
    theta1 = est1.params
    w = cfg.penalty.resolve_w(theta1, n1)
    v_bar = (
        cfg.v_bar
        if cfg.v_bar is not None
        else select_v_bar(theta1.M, theta1.p, cfg.v_bar_alpha)
    )
    triplet = find_triplet(theta1, w, v_bar)

    est2 = estimator(fold2)
    theta2 = est2.params
    A, x, v = triplet.A, triplet.x, triplet.v
    v_A = v[A]
    estimate = float(v_A @ (theta2.c[A] - theta2.M[A] @ x) + theta1.p @ x)

    if cfg.sigma_source == "analytic":
        if est2.sigma is None:
            raise InferenceError("analytic sigma_source requires the estimator to supply sigma")
        sigma_hat = math.sqrt(asymptotic_variance(A, x, v, est2.sigma))
        se = sigma_hat / math.sqrt(n2)
    else:
        resampler = getattr(est2, "resampler", None)
        if resampler is None:
            raise InferenceError("bootstrap sigma_source requires est2.resampler")
        se = bootstrap_se(resampler, A, x, v, cfg.bootstrap_reps, seed, n2=n2) / math.sqrt(n2)
        sigma_hat = se * math.sqrt(n2)

    degenerate = sigma_hat <= cfg.sigma_min or sigma_hat == 0.0
    sigma_hat = max(sigma_hat, cfg.sigma_min)
    se = sigma_hat / math.sqrt(n2)

    z1 = NormalDist().inv_cdf(1.0 - cfg.alpha)
    z2 = NormalDist().inv_cdf(1.0 - cfg.alpha / 2.0)
    return InferenceResult(
        estimate=estimate,
        se=se,
        ci_lower_onesided=estimate - z1 * se,
        ci_upper_onesided=estimate + z1 * se,
        ci_twosided=(estimate - z2 * se, estimate + z2 * se),
        triplet=triplet,
        n1=n1,
        n2=n2,
        degenerate_variance=degenerate,
    )


@dataclass
class TwoSidedInterval:
    lower: float
    upper: float
    crossed: bool


def combine_two_sided(
    lower: InferenceResult, upper: InferenceResult, alpha: float
) -> TwoSidedInterval:
    """Union-bound two-sided interval from min- and max-direction results.

    lb = lower-bound estimate minus its (1 - alpha/2) margin; ub symmetric.
    Crossed bounds are flagged, never swapped.
    """
    if not (0.0 < alpha < 1.0):
        raise InferenceError(f"alpha must lie in (0,1), got {alpha}")
    z = NormalDist().inv_cdf(1.0 - alpha / 2.0)
    lb = lower.estimate - z * lower.se
    ub = upper.estimate + z * upper.se
    return TwoSidedInterval(lower=lb, upper=ub, crossed=lb > ub)
