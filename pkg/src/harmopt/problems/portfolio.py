"""Mean-CVaR portfolio with a one-factor return model.

The decision is (weights, tau) with weights on the simplex and tau free. For
loss L = -weights^T xi the objective E[L] + rho * CVaR_a(L) equals

    E max(-x^T xi + rho tau, -(1 + rho/a) x^T xi + rho (1 - 1/a) tau)

minimized over tau, so the loss has two affine pieces in xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..ambiguity import MadAmbiguity, MomentAmbiguity
from ..core import AffinePiece, DecisionSpace, PiecewiseAffineLoss, SampleSet
from ..reformulation import PiecewiseHOProblem
from ..solver import SolverSettings


@dataclass(frozen=True)
class PortfolioInstance:
    m: int = 10
    a: float = 0.2
    rho: float = 10.0
    factor_var: float = 0.02
    mean_step: float = 0.03
    spread_step: float = 0.025
    parameterization: str = "variance"

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError("CVaR level must lie in (0, 1)")
        if self.rho < 0:
            raise ValueError("risk aversion must be nonnegative")
        if self.parameterization not in ("variance", "stddev"):
            raise ValueError("parameterization is 'variance' or 'stddev'")

    def _sd(self, second):
        return np.sqrt(second) if self.parameterization == "variance" else np.asarray(second, float)

    @property
    def factor_sd(self) -> float:
        return float(self._sd(self.factor_var))

    @property
    def idio_sd(self) -> np.ndarray:
        return self._sd(self.spread_step * np.arange(1, self.m + 1))

    @property
    def mean(self) -> np.ndarray:
        return self.mean_step * np.arange(1, self.m + 1)

    @property
    def covariance(self) -> np.ndarray:
        return self.factor_sd ** 2 + np.diag(self.idio_sd ** 2)

    @property
    def deviation(self) -> np.ndarray:
        """E|xi_i - mean_i| of the normal marginals."""
        return np.sqrt(np.diag(self.covariance)) * math.sqrt(2 / math.pi)

    def mad_ambiguity(self) -> MadAmbiguity:
        return MadAmbiguity(-np.inf, self.mean, np.inf, self.deviation)

    def moment_ambiguity(self, gamma1: float = 0.0, gamma2: float = 1.0) -> MomentAmbiguity:
        return MomentAmbiguity(self.mean, self.covariance, gamma1, gamma2)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def portfolio_pieces(rho: float, a: float, m: int = 10) -> PiecewiseAffineLoss:
    if not 0 < a < 1:
        raise ValueError("CVaR level must lie in (0, 1)")
    slopes = (-1.0, -1.0 - rho / a)
    intercepts = (rho, rho * (1 - 1 / a))
    pieces = []
    for s, t in zip(slopes, intercepts):
        A = np.hstack([s * np.eye(m), np.zeros((m, 1))])
        b = np.zeros(m + 1)
        b[-1] = t
        pieces.append(AffinePiece(A, np.zeros(m), b, 0.0))
    return PiecewiseAffineLoss(tuple(pieces))


def portfolio_space(m: int) -> DecisionSpace:
    E = np.zeros((1, m + 1))
    E[0, :m] = 1.0
    lower = np.concatenate([np.zeros(m), [-np.inf]])
    return DecisionSpace(m + 1, E=E, g=[1.0], lower=lower)


def generate_portfolio_samples(instance: PortfolioInstance, n: int, seed=None) -> SampleSet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    factor = rng.normal(0.0, instance.factor_sd, size=(n, 1))
    idio = rng.normal(instance.mean, instance.idio_sd, size=(n, instance.m))
    return SampleSet(factor + idio, seed=None if isinstance(seed, np.random.Generator) else seed)


def mean_cvar(weights, returns, rho: float, a: float) -> float:
    """E[L] + rho * CVaR_a(L) for L = -weights^T xi, tau chosen optimally for these returns."""
    loss = -np.asarray(returns, float) @ np.asarray(weights, float)
    n = loss.size
    srt = np.sort(loss)
    tail = np.concatenate([np.cumsum(srt[::-1])[::-1][1:], [0.0]])
    count = np.arange(n - 1, -1, -1)
    cvar = srt + (tail - count * srt) / (a * n)
    return float(loss.mean() + rho * cvar.min())


def mean_cvar_frozen_tau(weights, tau: float, returns, rho: float, a: float) -> float:
    loss = -np.asarray(returns, float) @ np.asarray(weights, float)
    return float(loss.mean() + rho * (tau + np.maximum(loss - tau, 0).mean() / a))


@dataclass
class PortfolioProblem(PiecewiseHOProblem):
    """Portfolio solve/evaluate interface; evaluation re-optimizes tau unless ``freeze_tau``."""

    rho: float = 10.0
    a: float = 0.2
    freeze_tau: bool = False

    def evaluate(self, x, samples: SampleSet) -> float:
        m = self.loss.m
        if self.freeze_tau:
            return mean_cvar_frozen_tau(x[:m], x[m], samples.atoms, self.rho, self.a)
        return mean_cvar(x[:m], samples.atoms, self.rho, self.a)


def portfolio_problem(instance: PortfolioInstance, ambiguity=None, settings: SolverSettings | None = None,
                      freeze_tau: bool = False) -> PortfolioProblem:
    if ambiguity is None:
        ambiguity = instance.mad_ambiguity()
    return PortfolioProblem(portfolio_pieces(instance.rho, instance.a, instance.m), portfolio_space(instance.m),
                            ambiguity, settings, rho=instance.rho, a=instance.a, freeze_tau=freeze_tau)
