"""Scenario reduction: pick M of N atoms and reweight them."""

from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import cdist

from .ambiguity import MadAmbiguity
from .config import TOL
from .core import DecisionSpace, PiecewiseAffineLoss, SampleSet, _fmt, _frozen
from .reformulation import HOInstance
from .solver import ProgramBuilder, solve
from .weights import lambda_for_reduction


@dataclass(frozen=True, eq=False)
class ReducedScenarioSet:
    indices: np.ndarray
    atoms: np.ndarray
    probs: np.ndarray
    method: str
    value: float = float("nan")
    trace: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int).reshape(-1)
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if not (idx.size == atoms.shape[0] == probs.size):
            raise ValueError("indices, atoms and probabilities disagree in length")
        if np.any(probs < 0) or abs(probs.sum() - 1) > TOL.weights * max(1, probs.size):
            raise ValueError("probabilities must be nonnegative and sum to one")
        object.__setattr__(self, "indices", _frozen(idx, int))
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "trace", tuple(self.trace))

    @property
    def size(self) -> int:
        return self.indices.size

    def as_samples(self) -> SampleSet:
        return SampleSet(self.atoms, self.probs)

    def to_dict(self) -> dict:
        return {"method": self.method, "value": self.value, "indices": self.indices.tolist(),
                "atoms": self.atoms.tolist(), "omega": self.probs.tolist()}

    def to_csv(self, path) -> None:
        m = self.atoms.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index"] + [f"x{i + 1}" for i in range(m)] + ["omega"])
            for i, row, p in zip(self.indices, self.atoms, self.probs):
                writer.writerow([int(i)] + [_fmt(v) for v in row] + [_fmt(p)])

    @classmethod
    def from_csv(cls, path, method: str = "") -> "ReducedScenarioSet":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh)][1:]
        data = np.array([[float(v) for v in r] for r in rows if r])
        return cls(data[:, 0].astype(int), data[:, 1:-1], data[:, -1], method)


def ground_costs(P: SampleSet, atoms, l: float = 1.0) -> np.ndarray:
    return cdist(P.atoms, np.atleast_2d(atoms)) ** l


def wasserstein_type_l(P: SampleSet, Q: SampleSet, l: float = 1.0) -> float:
    """Type-l optimal transport distance with Euclidean ground metric."""
    if l < 1:
        raise ValueError("l must be at least 1")
    cost = ground_costs(P, Q.atoms, l)
    n, m = cost.shape
    bld = ProgramBuilder()
    plan = bld.var("plan", n * m)
    bld.minimize(plan, cost.ravel())
    bld.geq([(plan, sp.identity(n * m))], np.zeros(n * m), "plan_nonneg")
    rows = sp.kron(sp.identity(n), np.ones((1, m)), format="csr")
    cols = sp.kron(np.ones((1, n)), sp.identity(m), format="csr")
    bld.eq([(plan, rows)], P.weights, "source")
    if m > 1:
        # the last target row follows from the others and the total mass
        bld.eq([(plan, cols[:-1])], Q.weights[:-1], "target")
    sol = solve(bld.build())
    if not sol.ok:
        raise RuntimeError(f"transportation LP failed: {sol.status}")
    return float(max(sol.objective, 0.0) ** (1.0 / l))


def _assign(P: SampleSet, support_idx) -> np.ndarray:
    d = cdist(P.atoms, P.atoms[np.asarray(support_idx, dtype=int)])
    return np.argmin(d, axis=1)


def recover_probabilities(P: SampleSet, support) -> np.ndarray:
    """Mass of the atoms nearest to each support point; ties go to the earlier support point."""
    support = np.asarray(support, dtype=int)
    owner = _assign(P, support)
    return np.bincount(owner, weights=P.weights, minlength=support.size)


def closest_fixed_support_distance(P: SampleSet, support, l: float = 1.0):
    """Distance from P to the best law on the given atoms of P, and that law."""
    support = np.asarray(support, dtype=int)
    cost = ground_costs(P, P.atoms[support], l)
    dist = float(P.weights @ cost.min(axis=1)) ** (1.0 / l)
    return dist, recover_probabilities(P, support)


def _objective(cost, weights, support):
    return float(weights @ cost[:, support].min(axis=1))


def _kmeans_init(P: SampleSet, m: int, rng) -> np.ndarray:
    start = rng.choice(P.n, m, replace=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        centroids, _ = kmeans2(P.atoms, P.atoms[start].copy(), iter=100, minit="matrix", missing="warn")
    chosen: list[int] = []
    d = cdist(centroids, P.atoms)
    for row in d:
        for j in np.argsort(row, kind="stable"):
            if j not in chosen:
                chosen.append(int(j))
                break
    return np.array(chosen, dtype=int)


def local_search_reduce(P: SampleSet, m: int, l: float = 1.0, init: str = "kmeans",
                        given=None, seed: int | None = 0, max_rounds: int = 10_000) -> ReducedScenarioSet:
    """Best-improvement swap search over M-subsets of the atoms.

    Each round evaluates every (in, out) exchange and applies the one with
    the lowest resulting transport cost, provided it is strictly lower than
    the current one. Ties prefer the smallest incoming atom index, then the
    smallest outgoing one.
    """
    if not 1 <= m < P.n:
        raise ValueError("need 1 <= M < N")
    rng = np.random.default_rng(seed)
    if init == "kmeans":
        support = _kmeans_init(P, m, rng)
    elif init == "random":
        support = rng.choice(P.n, m, replace=False)
    elif init == "given":
        support = np.asarray(given, dtype=int)
        if support.size != m or np.unique(support).size != m:
            raise ValueError("the given support must list M distinct atoms")
    else:
        raise ValueError(f"unknown init {init!r}")
    support = np.sort(support)
    cost = ground_costs(P, P.atoms, l)
    w = P.weights
    current = _objective(cost, w, support)
    trace = [current]
    for _ in range(max_rounds):
        inside = np.zeros(P.n, bool)
        inside[support] = True
        cand = np.flatnonzero(~inside)
        sub = cost[:, support]
        order = np.argsort(sub, axis=1, kind="stable")
        best = sub[np.arange(P.n), order[:, 0]]
        second = sub[np.arange(P.n), order[:, 1]] if m > 1 else np.full(P.n, np.inf)
        table = np.empty((cand.size, m))
        for r in range(m):
            without = np.where(order[:, 0] == r, second, best)
            table[:, r] = w @ np.minimum(without[:, None], cost[:, cand])
        flat = int(np.argmin(table))
        new = float(table.flat[flat])
        if not new < current - 1e-12 * max(1.0, abs(current)):
            break
        ci, r = divmod(flat, m)
        support = support.copy()
        support[r] = cand[ci]
        support = np.sort(support)
        current = _objective(cost, w, support)
        trace.append(current)
    probs = recover_probabilities(P, support)
    return ReducedScenarioSet(support, P.atoms[support], probs, "local_search",
                              current ** (1.0 / l), tuple(trace))


def exhaustive_reduce(P: SampleSet, m: int, l: float = 1.0) -> ReducedScenarioSet:
    """Optimal M-subset by enumeration; only for small N."""
    cost = ground_costs(P, P.atoms, l)
    best, best_val = None, np.inf
    for combo in itertools.combinations(range(P.n), m):
        val = _objective(cost, P.weights, list(combo))
        if val < best_val:
            best, best_val = np.array(combo), val
    return ReducedScenarioSet(best, P.atoms[best], recover_probabilities(P, best), "exhaustive",
                              best_val ** (1.0 / l))


def random_reduce(P: SampleSet, m: int, seed: int | None = 0) -> ReducedScenarioSet:
    if not 1 <= m <= P.n:
        raise ValueError("need 1 <= M <= N")
    idx = np.random.default_rng(seed).choice(P.n, m, replace=False)
    return ReducedScenarioSet(idx, P.atoms[idx], np.full(m, 1.0 / m), "random")


@dataclass(frozen=True, eq=False)
class HOReduction:
    """Reduced empirical law, ambiguity set from the full sample and the blend weight."""

    samples: SampleSet
    ambiguity: object
    lam: float

    def instance(self, loss: PiecewiseAffineLoss, space: DecisionSpace) -> HOInstance:
        return HOInstance(loss, space, self.samples, self.ambiguity, self.lam)


def ho_reduce(P: SampleSet, m: int, ambiguity_builder=None, seed: int | None = 0):
    """Random M-subset plus partial information taken from all N atoms.

    ``ambiguity_builder`` maps the full sample set to an ambiguity set; the
    default is a MAD set with the sample mean, sample deviations and the
    coordinate-wise sample range as support.
    """
    reduced = random_reduce(P, m, seed)
    builder = ambiguity_builder or MadAmbiguity.from_samples
    lam = lambda_for_reduction(m, P.n)
    reduced = ReducedScenarioSet(reduced.indices, reduced.atoms, reduced.probs, "ho", lam)
    return reduced, HOReduction(reduced.as_samples(), builder(P), lam)
