"""Choosing the blend weight lam = C / sqrt(N).

Four routes to C: validation-based search over a candidate grid, a
golden-section search that narrows the normal confidence interval of the
blended decision, the direct rule C = sqrt(M0), and, for scenario reduction,
lam = 1 - sqrt(M / N). Also the finite-sample radius eps(beta), the
boundary-distance function g(lam) and bisection for the smallest lam with
g(lam) >= eps.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .ambiguity import MadAmbiguity, gelbrich_distance, mix_pairs
from .core import MeanCovPair, SampleSet, normal_quantile


class HOProblem(Protocol):
    def solve(self, samples: SampleSet, lam: float) -> np.ndarray | None: ...
    def evaluate(self, x, samples: SampleSet) -> float: ...
    def losses(self, x, samples: SampleSet) -> np.ndarray: ...
    def feasible(self, x) -> bool: ...


RULES = ("c_over_sqrt_n", "reduction_rate", "fixed")


@dataclass(frozen=True)
class WeightPolicy:
    constant: float = 0.0
    rule: str = "c_over_sqrt_n"
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}")
        if self.constant < 0:
            raise ValueError("C must be nonnegative")

    def lam(self, n: int, m: int | None = None) -> float:
        if self.rule == "reduction_rate":
            if m is None:
                raise ValueError("the reduction rule needs the reduced size M")
            return lambda_for_reduction(m, n)
        if self.rule == "fixed":
            return min(1.0, self.constant)
        return min(1.0, self.constant / math.sqrt(n))


@dataclass(frozen=True)
class FiniteSampleConfig:
    m: int
    c1: float = 1.0
    c2: float = 1.0
    beta: float = 0.05
    a: float = 3.0

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0 or not 0 < self.beta < 1 or self.a <= 2 or self.m < 1:
            raise ValueError("invalid finite-sample configuration")


def epsilon_from_beta(cfg: FiniteSampleConfig, n: int) -> float:
    if n < 1:
        raise ValueError("N must be positive")
    log_term = math.log(cfg.c1 / cfg.beta)
    if log_term <= 0:
        raise ValueError("need beta < c1")
    ratio = log_term / (cfg.c2 * n)
    if n >= log_term / cfg.c2:
        return ratio ** (1.0 / max(cfg.m / 2, 2))
    return ratio ** (2.0 / cfg.a)


# ---------------------------------------------------------------------------
# g(lam) and bisection
# ---------------------------------------------------------------------------


def boundary_candidates(ambiguity: MadAmbiguity, family_size: int = 64) -> list[MeanCovPair]:
    """Moment pairs of information laws that make the deviation constraint tight.

    Every candidate has the set's mean and independent coordinates. Coordinate
    i has deviation equal to the clipped deviation, and its variance
    interpolates between deviation**2, the variance of the symmetric
    two-point law, and the variance of the three-point extremal law. The
    interpolation runs over ``family_size`` evenly spaced weights.
    """
    if family_size < 1:
        raise ValueError("the candidate family is empty")
    if not ambiguity.bounded:
        raise ValueError("boundary candidates need a bounded support box")
    dev = ambiguity.clipped_deviation()
    widest = dev * (ambiguity.upper - ambiguity.lower) / 2
    narrowest = np.minimum(dev ** 2, widest)
    out = []
    for t in np.linspace(0.0, 1.0, family_size):
        var = (1 - t) * narrowest + t * widest
        out.append(MeanCovPair(ambiguity.mean, np.diag(var)))
    return out


def g_of_lambda(samples: SampleSet, ambiguity: MadAmbiguity | None, lam: float,
                family_size: int = 64, candidates: Sequence[MeanCovPair] | None = None) -> float:
    """Smallest Gelbrich distance from the sample moments to lam-mixtures with the candidates."""
    if not 0 <= lam <= 1:
        raise ValueError("lam must lie in [0, 1]")
    base = MeanCovPair.of(samples)
    if candidates is None:
        candidates = boundary_candidates(ambiguity, family_size)
    if len(candidates) == 0:
        raise ValueError("the candidate family is empty")
    return min(gelbrich_distance(mix_pairs(base, c, lam), base) for c in candidates)


@dataclass
class BisectionResult:
    lam: float
    threshold_unreachable: bool = False
    non_monotone: bool = False
    iterations: int = 0


def bisection_lambda_star(g: Callable[[float], float], eps: float, delta: float = 1e-6) -> BisectionResult:
    lo, hi = 0.0, 1.0
    g_lo, g_hi = g(lo), g(hi)
    non_monotone = g_lo > g_hi + 1e-9
    if g_hi < eps:
        return BisectionResult(1.0, True, non_monotone, 0)
    mid = 0.5 * (lo + hi)
    it = 0
    while hi - lo >= delta:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid < g_lo - 1e-9 or g_mid > g_hi + 1e-9:
            non_monotone = True
        if g_mid >= eps:
            hi, g_hi = mid, g_mid
        else:
            lo, g_lo = mid, g_mid
        it += 1
    return BisectionResult(mid, False, non_monotone, it)


# ---------------------------------------------------------------------------
# Estimators for C
# ---------------------------------------------------------------------------


@dataclass
class EstimationReport:
    method: str
    constant: float
    per_fold: list[float] = field(default_factory=list)
    candidates: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "C": self.constant, "per_fold": list(self.per_fold),
                "candidates": list(self.candidates), "wall_time": self.wall_time, "details": self.details}

    def policy(self) -> WeightPolicy:
        return WeightPolicy(self.constant, "c_over_sqrt_n", {"method": self.method})


def fold_indices(n: int, folds: int, seed: int | None = 0) -> list[np.ndarray]:
    if folds < 2 or n < folds:
        raise ValueError("need 2 <= folds <= N")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _split(samples: SampleSet, parts, k: int, train_on_single_fold: bool):
    rest = np.sort(np.concatenate([p for j, p in enumerate(parts) if j != k]))
    single = parts[k]
    if train_on_single_fold:
        return samples.subset(single), samples.subset(rest)
    return samples.subset(rest), samples.subset(single)


def default_c_grid(n: int, points: int = 20) -> np.ndarray:
    return np.geomspace(0.05 * math.sqrt(n), math.sqrt(n), points)


def estimate_c_crossval(problem: HOProblem, samples: SampleSet, grid: Sequence[float] | None = None,
                        folds: int = 5, seed: int | None = 0,
                        train_on_single_fold: bool = True) -> EstimationReport:
    """Pick C by validation loss, fold by fold, and average the winners.

    By default each fold trains on a single part and validates on the
    remaining parts; ``train_on_single_fold=False`` gives the usual split.
    """
    t0 = time.perf_counter()
    grid = default_c_grid(samples.n) if grid is None else np.asarray(grid, dtype=float)
    parts = fold_indices(samples.n, folds, seed)
    winners = []
    curves = []
    for k in range(folds):
        train, valid = _split(samples, parts, k, train_on_single_fold)
        scores = []
        for c in grid:
            lam = min(1.0, c / math.sqrt(train.n))
            x = problem.solve(train, lam)
            scores.append(math.inf if x is None else problem.evaluate(x, valid))
        curves.append(scores)
        if all(math.isinf(s) for s in scores):
            continue
        winners.append(float(grid[int(np.argmin(scores))]))
    if not winners:
        raise RuntimeError("every candidate solve failed")
    return EstimationReport("crossval", float(np.mean(winners)), winners, grid.tolist(),
                            time.perf_counter() - t0,
                            {"folds": folds, "train_on_single_fold": train_on_single_fold,
                             "scores": curves})


GOLDEN = (math.sqrt(5) - 1) / 2


def golden_section(fun: Callable[[float], float], lo: float, hi: float, tol: float = 1e-3,
                   tie_tol: float = 1e-12) -> float:
    """Minimize a unimodal function on [lo, hi].

    Equal interior values shrink the bracket from both sides, so a flat
    function converges to the midpoint.
    """
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        both_inf = math.isinf(fc) and math.isinf(fd)
        close = math.isfinite(fc) and math.isfinite(fd) and abs(fc - fd) <= tie_tol * max(1.0, abs(fc), abs(fd))
        if both_inf or close:
            a, b = c, d
            c = b - GOLDEN * (b - a)
            d = a + GOLDEN * (b - a)
            fc, fd = fun(c), fun(d)
        elif fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def estimate_c_gap(problem: HOProblem, samples: SampleSet, folds: int = 5, alpha: float = 0.05,
                   search_range: tuple[float, float] | None = None, tol: float = 1e-3,
                   seed: int | None = 0, train_on_single_fold: bool = True) -> EstimationReport:
    """Pick C so the blended decision has the narrowest validation confidence interval.

    The decision for a given C interpolates the sample-average and pure
    worst-case solutions of the training fold with weight C / sqrt(n_train);
    decisions outside the feasible set score +inf.
    """
    t0 = time.perf_counter()
    lo, hi = (0.0, math.sqrt(samples.n)) if search_range is None else search_range
    z = normal_quantile(1 - alpha / 2)
    parts = fold_indices(samples.n, folds, seed)
    winners = []
    feasible_any = False
    for k in range(folds):
        train, valid = _split(samples, parts, k, train_on_single_fold)
        x_saa = problem.solve(train, 0.0)
        x_dro = problem.solve(train, 1.0)
        if x_saa is None or x_dro is None:
            continue
        root = math.sqrt(train.n)

        def width(c, x_saa=x_saa, x_dro=x_dro, root=root, valid=valid):
            nonlocal feasible_any
            t = c / root
            x = (1 - t) * x_saa + t * x_dro
            if not problem.feasible(x):
                return math.inf
            feasible_any = True
            vals = problem.losses(x, valid)
            return z * float(np.std(vals, ddof=1)) / math.sqrt(vals.size)

        winners.append(golden_section(width, lo, hi, tol))
    if not winners or not feasible_any:
        raise RuntimeError("no feasible blended decision in the search range")
    return EstimationReport("gap", float(np.mean(winners)), winners, [lo, hi], time.perf_counter() - t0,
                            {"folds": folds, "alpha": alpha, "tol": tol,
                             "train_on_single_fold": train_on_single_fold})


def estimate_c_fixed(m0: int) -> float:
    if m0 < 1:
        raise ValueError("M0 must be at least 1")
    return math.sqrt(m0)


def lambda_for_reduction(m: int, n: int) -> float:
    if not 1 <= m <= n:
        raise ValueError("need 1 <= M <= N")
    return 1.0 - math.sqrt(m / n)
