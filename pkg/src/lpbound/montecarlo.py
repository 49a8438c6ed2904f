"""Replicated simulation studies for the LP-value estimators.

Three studies: estimator consistency on the two worked example designs,
one-sided confidence interval coverage on the noisy-design variant, and the
uniform-rate grid study that contrasts the sqrt(n)- and sqrt(n)/w_n-scaled
sup-deviations of the penalty estimator.

Randomness is counter-based (Philox keyed by the scenario seed, with the
counter encoding replication, sample-size index, and stream), so replications
are reproducible independently of execution order.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .linalg import LpParams, solve_lp, OPTIMAL
from .estimators import (
    PenaltyConfig,
    penalty_value,
    debiased_estimate,
    set_expansion_value,
    default_kappa_n,
)
from .geometry import delta_condition
from .inference import InferenceConfig, ThetaEstimate, run_inference

DGP_EXAMPLE_A = "example_a"
DGP_EXAMPLE_B = "example_b"
DGP_UNIFORM_GRID = "uniform_grid"

ESTIMATORS = ("plugin", "penalty", "debiased", "setexp")

_BOX2 = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))


class ScenarioError(ValueError):
    pass


@dataclass
class SimulationScenario:
    dgp: str
    b: float = 0.0
    sample_sizes: Sequence[int] = (100, 500, 1000, 5000)
    replications: int = 1000
    estimators: Sequence[str] = ESTIMATORS
    seed: int = 0
    alpha: float = 0.05
    kappa0: float = 0.1
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    slater: bool = False  # uniform-grid: draw the intercept noise from U[0,1]
    grid: str = "full"  # uniform-grid: "full" 9-point grid or "single" {0}

    def __post_init__(self):
        if self.replications < 1:
            raise ScenarioError("replications must be at least 1")
        sizes = list(self.sample_sizes)
        if any(b >= a for a, b in zip(sizes[1:], sizes)):
            raise ScenarioError("sample_sizes must be strictly increasing")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ScenarioError(f"unknown estimators: {sorted(unknown)}")
        if self.dgp not in (DGP_EXAMPLE_A, DGP_EXAMPLE_B, DGP_UNIFORM_GRID):
            raise ScenarioError(f"unknown dgp {self.dgp!r}")
        if self.grid not in ("full", "single"):
            raise ScenarioError(f"grid must be 'full' or 'single', got {self.grid!r}")


@dataclass
class ReportRow:
    estimator: str
    n: int
    mean: Optional[float] = None
    bias: Optional[float] = None
    std: Optional[float] = None
    rmse: Optional[float] = None
    failures: int = 0
    coverage: Optional[float] = None
    mean_lcb: Optional[float] = None


@dataclass
class SimulationReport:
    scenario: SimulationScenario
    rows: List[ReportRow]

    CSV_COLUMNS = ("estimator", "n", "mean", "bias", "std", "rmse",
                   "failures", "coverage", "mean_lcb")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([
                r.estimator,
                r.n,
                *("" if v is None else repr(v) for v in
                  (r.mean, r.bias, r.std, r.rmse)),
                r.failures,
                *("" if v is None else repr(v) for v in (r.coverage, r.mean_lcb)),
            ])
        return buf.getvalue()


def rng_for(seed: int, n_idx: int, rep: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed per (replication, n, stream): draws are
    identical regardless of execution order and streams never overlap."""
    bit = np.random.Philox(seed=np.random.SeedSequence((seed, n_idx, rep, stream)))
    return np.random.Generator(bit)


def example_a_params(b_hat: float) -> LpParams:
    p = np.array([1.0, 0.0])
    M = np.array([[-(1.0 + b_hat), 1.0], [1.0, -1.0], [1.0, 0.0], [-1.0, 0.0]])
    c = np.array([0.0, 0.0, -1.0, -1.0])
    return LpParams(p=p, M=M, c=c, box=_BOX2)


def example_b_params(b_hat: float, zeta_hat: float, nu_hat: float) -> LpParams:
    p = np.array([1.0, 0.0])
    M = np.array([
        [-(1.0 + b_hat), 1.0],
        [1.0 + zeta_hat, -1.0],
        [1.0, 0.0],
        [-1.0, 0.0],
    ])
    c = np.array([nu_hat, zeta_hat, -1.0 - nu_hat, -1.0])
    return LpParams(p=p, M=M, c=c, box=_BOX2)


_EXAMPLE_B_GRADIENT = np.zeros((14, 3))
_EXAMPLE_B_GRADIENT[2, 0] = -1.0   # d M11 / d b
_EXAMPLE_B_GRADIENT[3, 1] = 1.0    # d M21 / d zeta
_EXAMPLE_B_GRADIENT[11, 1] = 1.0   # d c2 / d zeta
_EXAMPLE_B_GRADIENT[10, 2] = 1.0   # d c1 / d nu
_EXAMPLE_B_GRADIENT[12, 2] = -1.0  # d c3 / d nu


def draw_theta(scenario: SimulationScenario, n: int, rng: np.random.Generator) -> LpParams:
    """One parameter estimate of size n under the scenario's design."""
    if n < 1:
        raise ScenarioError("n must be at least 1")
    if scenario.dgp == DGP_EXAMPLE_A:
        b_hat = scenario.b + float(rng.uniform(-1.0, 1.0, size=n).mean())
        return example_a_params(b_hat)
    if scenario.dgp == DGP_EXAMPLE_B:
        U = rng.uniform(-0.5, 0.5, size=(n, 3))
        return example_b_params(scenario.b + U[:, 0].mean(), U[:, 1].mean(), U[:, 2].mean())
    raise ScenarioError(f"draw_theta does not support dgp {scenario.dgp!r}")


def _true_params(scenario: SimulationScenario) -> LpParams:
    if scenario.dgp == DGP_EXAMPLE_A:
        return example_a_params(scenario.b)
    if scenario.dgp == DGP_EXAMPLE_B:
        return example_b_params(scenario.b, 0.0, 0.0)
    raise ScenarioError(f"no closed truth for dgp {scenario.dgp!r}")


def run_consistency(scenario: SimulationScenario) -> SimulationReport:
    """Replicated point estimation; failed draws are counted, never imputed."""
    truth_sol = solve_lp(_true_params(scenario))
    if truth_sol.status != OPTIMAL:
        raise ScenarioError(f"true LP is {truth_sol.status}")
    truth = float(truth_sol.value)
    rows: List[ReportRow] = []
    for n_idx, n in enumerate(scenario.sample_sizes):
        values: Dict[str, List[float]] = {e: [] for e in scenario.estimators}
        failures: Dict[str, int] = {e: 0 for e in scenario.estimators}
        kappa_n = default_kappa_n(n, scenario.kappa0)
        for rep in range(scenario.replications):
            params = draw_theta(scenario, n, rng_for(scenario.seed, n_idx, rep))
            for est in scenario.estimators:
                if est == "plugin":
                    sol = solve_lp(params)
                    if sol.status == OPTIMAL:
                        values[est].append(float(sol.value))
                    else:
                        failures[est] += 1
                elif est == "penalty":
                    values[est].append(penalty_value(params, scenario.penalty, n=n))
                elif est == "debiased":
                    res = debiased_estimate(params, scenario.penalty, pick="max", n=n)
                    values[est].append(res.value)
                else:
                    sol = set_expansion_value(params, kappa_n, n)
                    if sol.status == OPTIMAL:
                        values[est].append(float(sol.value))
                    else:
                        failures[est] += 1
        for est in scenario.estimators:
            vals = np.array(values[est])
            row = ReportRow(estimator=est, n=n, failures=failures[est])
            if vals.size:
                row.mean = float(vals.mean())
                row.bias = row.mean - truth
                row.std = float(vals.std(ddof=0))
                row.rmse = float(np.sqrt(np.mean((vals - truth) ** 2)))
            rows.append(row)
    return SimulationReport(scenario=scenario, rows=rows)


def _example_b_estimator(U: np.ndarray, b: float):
    """Fold estimator for the noisy design: subset means plus delta-method
    covariance of (p, vec M, c) driven by the sample covariance of the noise."""

    def estimate(idx: np.ndarray) -> ThetaEstimate:
        sub = U[idx]
        params = example_b_params(
            b + sub[:, 0].mean(), sub[:, 1].mean(), sub[:, 2].mean()
        )
        omega = np.cov(sub.T)
        return ThetaEstimate(
            params=params,
            sigma=_EXAMPLE_B_GRADIENT @ omega @ _EXAMPLE_B_GRADIENT.T,
        )

    return estimate


def run_inference_study(scenario: SimulationScenario) -> SimulationReport:
    """Coverage of the true LP value by the one-sided split-sample interval."""
    if scenario.dgp != DGP_EXAMPLE_B:
        raise ScenarioError("the inference study runs on the noisy design (example_b)")
    truth = float(solve_lp(_true_params(scenario)).value)
    cfg = InferenceConfig(alpha=scenario.alpha, penalty=scenario.penalty)
    rows: List[ReportRow] = []
    for n_idx, n in enumerate(scenario.sample_sizes):
        covered = 0
        estimates = []
        lcbs = []
        failures = 0
        for rep in range(scenario.replications):
            U = rng_for(scenario.seed, n_idx, rep).uniform(-0.5, 0.5, size=(n, 3))
            result = run_inference(
                n,
                _example_b_estimator(U, scenario.b),
                cfg,
                seed=np.random.SeedSequence((scenario.seed, n_idx, rep, 1)),
            )
            estimates.append(result.estimate)
            lcbs.append(result.ci_lower_onesided)
            if result.ci_lower_onesided <= truth:
                covered += 1
        vals = np.array(estimates)
        rows.append(ReportRow(
            estimator="debiased_ci",
            n=n,
            mean=float(vals.mean()),
            bias=float(vals.mean()) - truth,
            std=float(vals.std(ddof=0)),
            rmse=float(np.sqrt(np.mean((vals - truth) ** 2))),
            failures=failures,
            coverage=covered / scenario.replications,
            mean_lcb=float(np.mean(lcbs)),
        ))
    return SimulationReport(scenario=scenario, rows=rows)


# -- uniform-rate grid study -------------------------------------------------

_GRID_BOX = (np.array([-1.5, -3.0]), np.array([1.5, 3.0]))


def _grid_params(a: float, b: float, c: float, dshift: float) -> LpParams:
    """min y - (1+a) x over y <= (1+b) x + dshift, y >= (1+c) x, |x| <= 1."""
    p = np.array([-(1.0 + a), 1.0])
    M = np.array([
        [1.0 + b, -1.0],
        [-(1.0 + c), 1.0],
        [1.0, 0.0],
        [-1.0, 0.0],
    ])
    cvec = np.array([-dshift, 0.0, -1.0, -1.0])
    return LpParams(p=p, M=M, c=cvec, box=_GRID_BOX)


def _grid_delta() -> float:
    """Worst-case basis conditioning across the target range of slopes."""
    return min(
        delta_condition(_grid_params(a, 0.0, 0.0, 0.0)).delta
        for a in (-0.1, 0.0, 0.1)
    )


def grid_wn(n: int, delta: float) -> float:
    return (math.log(n) / math.log(100.0)) * (1.5 / delta)


def grid_points(n: int, delta: float, grid: str = "full") -> List[float]:
    """Slope grid: three fixed points plus three symmetric moving pairs whose
    positions equal +-0.1 at n = 100."""
    if grid == "single":
        return [0.0]
    wn = grid_wn(n, delta)
    c1 = 10.0
    c2 = 10.0 * delta / 1.5
    c3 = 1.5 / delta
    pts = [-0.1, 0.0, 0.1]
    for mag in (0.1 * c1 / math.sqrt(n), 0.1 * c2 * wn / math.sqrt(n), 0.1 * c3 / wn):
        pts.extend([-mag, mag])
    return pts


@dataclass
class UniformGridResult:
    sample_sizes: List[int]
    sup_std: np.ndarray            # std across reps of the sup-|error|
    sqrt_n_scaled: np.ndarray      # sup_std * sqrt(n)
    adaptive_scaled: np.ndarray    # sup_std * sqrt(n) / w_n
    sqrt_n_normalized: np.ndarray  # sqrt_n series matched to adaptive at n[0]
    delta: float


def run_uniform_grid(scenario: SimulationScenario) -> UniformGridResult:
    """Std of per-replication sup-deviations of the penalty estimator, scaled
    by sqrt(n) and by sqrt(n)/w_n."""
    if scenario.dgp != DGP_UNIFORM_GRID:
        raise ScenarioError("run_uniform_grid needs the uniform_grid dgp")
    delta = _grid_delta()
    sizes = list(scenario.sample_sizes)
    sup_std = np.zeros(len(sizes))
    for n_idx, n in enumerate(sizes):
        wn = grid_wn(n, delta)
        w = np.full(4, wn)
        pts = grid_points(n, delta, scenario.grid)
        truths = []
        for a in pts:
            true_d = 0.5 if scenario.slater else 0.0
            sol = solve_lp(_grid_params(a, 0.0, 0.0, true_d))
            truths.append(float(sol.value))
        sups = np.zeros(scenario.replications)
        cfg = PenaltyConfig(w=w)
        for rep in range(scenario.replications):
            rng = rng_for(scenario.seed, n_idx, rep)
            noise = rng.uniform(-0.5, 0.5, size=(n, 3)).mean(axis=0)
            if scenario.slater:
                dshift = float(rng.uniform(0.0, 1.0, size=n).mean())
            else:
                dshift = float(noise[2])
            worst = 0.0
            for a, truth in zip(pts, truths):
                params = _grid_params(a, float(noise[0]), float(noise[1]), dshift)
                value = penalty_value(params, cfg)
                worst = max(worst, abs(value - truth))
            sups[rep] = worst
        sup_std[n_idx] = sups.std(ddof=0)
    ns = np.array(sizes, dtype=float)
    wns = np.array([grid_wn(n, delta) for n in sizes])
    sqrt_series = sup_std * np.sqrt(ns)
    adaptive = sqrt_series / wns
    factor = adaptive[0] / sqrt_series[0] if sqrt_series[0] > 0 else 1.0
    return UniformGridResult(
        sample_sizes=sizes,
        sup_std=sup_std,
        sqrt_n_scaled=sqrt_series,
        adaptive_scaled=adaptive,
        sqrt_n_normalized=sqrt_series * factor,
        delta=delta,
    )


def loglog_slope(ns: Sequence[int], series: np.ndarray) -> float:
    """Least-squares slope of log(series) against log(n)."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(series, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
