"""Two-stage lot sizing with transshipment between stores.

First stage: stock levels 0 <= x <= K at storage cost a^T x. After demand xi
is revealed, stores ship units along capacitated links (unit cost b_ij) and
pay a penalty c_i per unit of unmet demand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ..ambiguity import MadAmbiguity, mad_worst_case_marginal
from ..core import SampleSet, _frozen
from ..solver import ProgramBuilder, Solution, SolverSettings, solve


@dataclass(frozen=True, eq=False)
class LotSizingInstance:
    storage_cost: np.ndarray
    transport_cost: np.ndarray
    penalty: np.ndarray
    transport_cap: np.ndarray
    stock_cap: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mean: np.ndarray
    deviation: np.ndarray

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        m = self.m
        if self.transport_cost.shape != (m, m) or self.transport_cap.shape != (m, m):
            raise ValueError("transport data must be m x m")
        if any(np.any(getattr(self, f) < 0) for f in ("storage_cost", "transport_cost", "penalty",
                                                       "transport_cap", "stock_cap", "deviation")):
            raise ValueError("costs and capacities must be nonnegative")
        if np.any(self.lower > self.mean) or np.any(self.mean > self.upper):
            raise ValueError("need lower <= mean <= upper")

    @property
    def m(self) -> int:
        return self.storage_cost.size

    def mad_ambiguity(self) -> MadAmbiguity:
        return MadAmbiguity(self.lower, self.mean, self.upper, self.deviation)

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "LotSizingInstance":
        return cls(**{name: np.asarray(data[name], float) for name in cls.__dataclass_fields__})


def band_floor(gap: int) -> float:
    """Lower end of the transport-cost range for stores ``gap`` apart."""
    for k in range(7):
        if 4 * k + 1 <= gap <= 4 * (k + 1):
            return 1.0 + 0.5 * k
    return 4.5


def generate_lotsizing_instance(m: int, seed=None) -> LotSizingInstance:
    """Random network instance.

    ``mean`` holds the drawn centres used to place the demand box and
    ``deviation`` the expected distance E|xi_i - mean_i| under the uniform
    demand law on the box.
    """
    if m < 2:
        raise ValueError("need at least two stores")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = rng.uniform(0.5, 1.5, m)
    mu = rng.uniform(300, 420, m)
    lower = rng.uniform(60, mu - 60)
    upper = rng.uniform(mu + 60, 660)
    floor = np.array([[band_floor(abs(i - j)) for j in range(m)] for i in range(m)])
    b = rng.uniform(floor, floor + 1)
    np.fill_diagonal(b, 0.0)
    c = 5 * b.sum(axis=0)
    Y = 1.0 - np.eye(m)
    dev = ((mu - lower) ** 2 + (upper - mu) ** 2) / (2 * (upper - lower))
    return LotSizingInstance(storage_cost=a, transport_cost=b, penalty=c, transport_cap=Y,
                             stock_cap=upper.copy(), lower=lower, upper=upper, mean=mu, deviation=dev)


def sample_demands(instance: LotSizingInstance, n: int, seed=None) -> SampleSet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return SampleSet(rng.uniform(instance.lower, instance.upper, size=(n, instance.m)))


def _links(instance):
    """Directed links (i, j) with positive capacity, in row-major order."""
    i, j = np.nonzero(instance.transport_cap > 0)
    return i, j


def _second_stage_block(instance, links, n_scen):
    """Balance rows for ``n_scen`` stacked scenarios: inflow - outflow + z."""
    m = instance.m
    i, j = links
    n_links = i.size
    rows = np.concatenate([j, i])
    cols = np.concatenate([np.arange(n_links), np.arange(n_links)])
    vals = np.concatenate([np.ones(n_links), -np.ones(n_links)])
    flow = sp.csr_matrix((vals, (rows, cols)), shape=(m, n_links))
    eye_s = sp.identity(n_scen, format="csr")
    return sp.kron(eye_s, flow, format="csr"), sp.kron(eye_s, sp.identity(m), format="csr")


def _add_recourse(bld, instance, links, scenarios, probs, x=None, tag="r"):
    """Inline one copy of the second stage per scenario, weighted by ``probs``."""
    n_scen = scenarios.shape[0]
    m = instance.m
    i, j = links
    n_links = i.size
    y = bld.var(f"y_{tag}", n_scen * n_links)
    z = bld.var(f"z_{tag}", n_scen * m)
    bld.minimize(y, np.kron(probs, instance.transport_cost[i, j]))
    bld.minimize(z, np.kron(probs, instance.penalty))
    F, Z = _second_stage_block(instance, links, n_scen)
    terms = [(y, F), (z, Z)]
    rhs = scenarios.reshape(-1)
    if x is not None:
        terms.append((x, sp.kron(np.ones((n_scen, 1)), sp.identity(m), format="csr")))
    bld.geq(terms, rhs, f"balance_{tag}")
    bld.geq([(y, sp.identity(y.size))], np.zeros(y.size), f"y_nonneg_{tag}")
    bld.leq([(y, sp.identity(y.size))], np.tile(instance.transport_cap[i, j], n_scen), f"y_cap_{tag}")
    bld.geq([(z, sp.identity(z.size))], np.zeros(z.size), f"z_nonneg_{tag}")


def second_stage_costs(instance: LotSizingInstance, x, xis, batch: int = 500,
                       settings: SolverSettings | None = None) -> np.ndarray:
    """Recourse cost for each demand row of ``xis`` (scenarios solved in stacked batches)."""
    x = np.asarray(x, dtype=float)
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    if xis.shape[1] != instance.m or x.shape != (instance.m,):
        raise ValueError("dimension mismatch")
    links = _links(instance)
    i, j = links
    out = np.zeros(xis.shape[0])
    short = np.any(xis > x + 1e-12, axis=1)
    todo = np.flatnonzero(short)
    for start in range(0, todo.size, batch):
        rows = todo[start:start + batch]
        need = xis[rows] - x
        bld = ProgramBuilder()
        _add_recourse(bld, instance, links, need, np.ones(rows.size))
        prog = bld.build()
        sol = solve(prog, settings)
        if not sol.ok:
            raise RuntimeError(f"second-stage LP failed: {sol.status}")
        y = prog.value(sol.x, "y_r").reshape(rows.size, -1)
        z = prog.value(sol.x, "z_r").reshape(rows.size, -1)
        out[rows] = y @ instance.transport_cost[i, j] + z @ instance.penalty
    return out


def second_stage_cost(instance: LotSizingInstance, x, xi) -> float:
    return float(second_stage_costs(instance, x, np.asarray(xi, float)[None, :])[0])


class ComonotonePath(NamedTuple):
    atoms: np.ndarray
    probs: np.ndarray


def long_worst_case(source) -> ComonotonePath:
    """Comonotone coupling of the per-coordinate three-point worst-case marginals.

    ``source`` is a :class:`LotSizingInstance` or a bounded :class:`MadAmbiguity`.
    The sweep starts with every coordinate at its lower atom. At each step
    the probability of the current atom is the smallest remaining mass among
    the coordinates; that mass is removed from every coordinate, and the
    lowest-indexed coordinate whose current level is exhausted moves up one
    level and picks up that level's full marginal mass. After 2m steps every
    coordinate sits at its upper atom.
    """
    amb = source.mad_ambiguity() if isinstance(source, LotSizingInstance) else source
    m = amb.m
    laws = [mad_worst_case_marginal(amb.lower[i], amb.mean[i], amb.upper[i], amb.deviation[i]) for i in range(m)]
    values = np.array([law.atoms for law in laws])
    masses = np.array([law.probs for law in laws])
    level = np.zeros(m, dtype=int)
    remaining = masses[:, 0].copy()
    atoms = [values[np.arange(m), level].copy()]
    probs = [remaining.min()]
    for _ in range(2 * m):
        p = probs[-1]
        # a coordinate already at its top atom never moves again; with
        # zero-mass levels it can tie with one that still has to
        hit = int(np.flatnonzero((remaining == p) & (level < 2))[0]) if np.any((remaining == p) & (level < 2)) \
            else int(np.flatnonzero(level < 2)[np.argmin(remaining[level < 2])])
        remaining = remaining - p
        level[hit] += 1
        remaining[hit] = masses[hit, level[hit]]
        atoms.append(values[np.arange(m), level].copy())
        probs.append(float(remaining.min()))
    return ComonotonePath(np.array(atoms), np.clip(np.array(probs), 0.0, None))


class LotSizingResult(NamedTuple):
    solution: Solution
    x: np.ndarray | None
    objective: float


def build_lotsizing_program(instance: LotSizingInstance, scenarios, probs):
    bld = ProgramBuilder()
    m = instance.m
    x = bld.var("x", m)
    bld.minimize(x, instance.storage_cost)
    bld.geq([(x, np.eye(m))], np.zeros(m), "x_nonneg")
    bld.leq([(x, np.eye(m))], instance.stock_cap, "x_cap")
    keep = np.asarray(probs) > 0
    _add_recourse(bld, instance, _links(instance), np.asarray(scenarios)[keep], np.asarray(probs)[keep], x, "s")
    return bld.build()


def lotsizing_ho_solve(instance: LotSizingInstance, samples: SampleSet, lam: float,
                       path: ComonotonePath | None = None,
                       settings: SolverSettings | None = None) -> LotSizingResult:
    """Extensive-form LP over the samples (weight 1 - lam) and the path atoms (weight lam)."""
    if not 0 <= lam <= 1:
        raise ValueError("lam must lie in [0, 1]")
    scen = [samples.atoms]
    probs = [(1 - lam) * samples.weights]
    if lam > 0:
        path = path or long_worst_case(instance)
        scen.append(path.atoms)
        probs.append(lam * path.probs)
    prog = build_lotsizing_program(instance, np.vstack(scen), np.concatenate(probs))
    sol = solve(prog, settings)
    x = None if sol.x is None else prog.value(sol.x, "x")
    return LotSizingResult(sol, x, sol.objective)


def lotsizing_out_of_sample(instance: LotSizingInstance, x, test, batch: int = 500) -> float:
    xis = test.atoms if isinstance(test, SampleSet) else np.asarray(test, float)
    return float(instance.storage_cost @ x + second_stage_costs(instance, x, xis, batch).mean())
