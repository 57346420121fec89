"""Samples, piecewise affine losses, decision sets and empirical evaluation.

Everything here is an immutable value type or a pure function. Arrays stored
on the dataclasses are copied on construction and flagged read-only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import NamedTuple

import numpy as np

from .config import TOL


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Weighted atoms of an empirical distribution.

    Parameters
    ----------
    atoms : array_like, shape (N, m)
        One realization per row. A 1-D input is read as N scalar samples.
    weights : array_like, shape (N,), optional
        Probabilities of the atoms; uniform when omitted.
    seed : int, optional
        Provenance tag of the generator that produced the atoms.
    """

    atoms: np.ndarray
    weights: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise ValueError("a sample set needs at least one atom of dimension >= 1")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("sample atoms must be finite")
        n = atoms.shape[0]
        if self.weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if weights.shape != (n,):
                raise ValueError(f"expected {n} weights, got {weights.shape}")
            if np.any(weights < 0) or not np.all(np.isfinite(weights)):
                raise ValueError("weights must be finite and nonnegative")
            if abs(weights.sum() - 1.0) > TOL.weights * max(1, n):
                raise ValueError(f"weights sum to {weights.sum():.17g}, not 1")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def subset(self, index, weights=None) -> "SampleSet":
        index = np.asarray(index, dtype=int)
        if weights is None:
            w = self.weights[index]
            weights = w / w.sum()
        return SampleSet(self.atoms[index], weights, self.seed)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SampleSet":
        return cls(np.array(data["atoms"], dtype=float), data.get("weights"), data.get("seed"))

    def to_csv(self, path, with_weights: bool = True) -> None:
        header = [f"x{i + 1}" for i in range(self.m)]
        if with_weights:
            header.append("weight")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row, w in zip(self.atoms, self.weights):
                cells = [_fmt(v) for v in row]
                if with_weights:
                    cells.append(_fmt(w))
                writer.writerow(cells)

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty sample file")
        header, body = rows[0], rows[1:]
        has_w = header[-1].strip().lower() == "weight"
        data = np.array([[float(v) for v in r] for r in body if r], dtype=float)
        if data.size == 0:
            raise ValueError(f"{path}: no sample rows")
        if has_w:
            return cls(data[:, :-1], data[:, -1])
        return cls(data)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AffinePiece:
    """One piece alpha(x)^T xi + beta(x) with alpha = A x + a and beta = b^T x + c."""

    A: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "a", _frozen(np.asarray(self.a, dtype=float).reshape(-1)))
        object.__setattr__(self, "b", _frozen(np.asarray(self.b, dtype=float).reshape(-1)))
        object.__setattr__(self, "c", float(self.c))
        if self.a.shape != (A.shape[0],) or self.b.shape != (A.shape[1],):
            raise ValueError("inconsistent piece dimensions")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(self.a))
                and np.all(np.isfinite(self.b)) and math.isfinite(self.c)):
            raise ValueError("piece data must be finite")


@dataclass(frozen=True, eq=False)
class PiecewiseAffineLoss:
    """Convex loss f(x, xi) = max_k alpha_k(x)^T xi + beta_k(x)."""

    pieces: tuple[AffinePiece, ...]
    A: np.ndarray = field(init=False, repr=False)
    a: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)
    c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("a loss needs at least one piece")
        shape = pieces[0].A.shape
        if any(p.A.shape != shape for p in pieces):
            raise ValueError("all pieces must share (m, n)")
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "A", _frozen(np.stack([p.A for p in pieces])))
        object.__setattr__(self, "a", _frozen(np.stack([p.a for p in pieces])))
        object.__setattr__(self, "b", _frozen(np.stack([p.b for p in pieces])))
        object.__setattr__(self, "c", _frozen(np.array([p.c for p in pieces])))

    @property
    def k(self) -> int:
        return len(self.pieces)

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def n(self) -> int:
        return self.A.shape[2]

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.n,):
            raise ValueError(f"decision has length {x.shape[0]}, loss expects {self.n}")
        return x

    def alpha(self, x) -> np.ndarray:
        """Slopes, shape (K, m)."""
        x = self._check_x(x)
        return self.A @ x + self.a

    def beta(self, x) -> np.ndarray:
        """Intercepts, shape (K,)."""
        x = self._check_x(x)
        return self.b @ x + self.c

    def values(self, x, xis) -> np.ndarray:
        """Loss at each row of ``xis``."""
        xis = np.asarray(xis, dtype=float)
        if xis.ndim == 1:
            xis = xis[None, :]
        if xis.shape[1] != self.m:
            raise ValueError(f"uncertainty has dimension {xis.shape[1]}, loss expects {self.m}")
        return (xis @ self.alpha(x).T + self.beta(x)).max(axis=1)

    def to_dict(self) -> dict:
        return {"pieces": [{"A": p.A.tolist(), "a": p.a.tolist(), "b": p.b.tolist(), "c": p.c}
                           for p in self.pieces]}

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseAffineLoss":
        return cls(tuple(AffinePiece(p["A"], p["a"], p["b"], p.get("c", 0.0)) for p in data["pieces"]))

    @classmethod
    def linear(cls, slopes, intercept=0.0) -> "PiecewiseAffineLoss":
        """Single piece xi -> slopes^T xi + intercept, constant in a 1-D dummy decision."""
        slopes = np.asarray(slopes, dtype=float).reshape(-1)
        return cls((AffinePiece(np.zeros((slopes.size, 1)), slopes, [0.0], intercept),))


def evaluate_loss(loss: PiecewiseAffineLoss, x, xi) -> float:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (loss.m,):
        raise ValueError(f"uncertainty has length {xi.shape[0]}, loss expects {loss.m}")
    return float(loss.values(x, xi[None, :])[0])


def per_sample_losses(loss: PiecewiseAffineLoss, x, samples: SampleSet) -> np.ndarray:
    return loss.values(x, samples.atoms)


def saa_objective(loss: PiecewiseAffineLoss, x, samples: SampleSet) -> float:
    return float(samples.weights @ per_sample_losses(loss, x, samples))


def normal_quantile(p: float) -> float:
    return NormalDist().inv_cdf(p)


class ConfidenceInterval(NamedTuple):
    lower: float
    upper: float
    half_width: float


def confidence_interval(loss: PiecewiseAffineLoss, x, samples: SampleSet, alpha: float = 0.05) -> ConfidenceInterval:
    """Normal-approximation interval for E f(x, xi) from i.i.d. samples.

    The spread uses the unbiased variance of the per-sample losses, so the
    atoms are treated as equally weighted draws.
    """
    return interval_from_values(per_sample_losses(loss, x, samples), alpha)


def interval_from_values(values, alpha: float = 0.05) -> ConfidenceInterval:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    values = np.asarray(values, dtype=float).reshape(-1)
    n = values.size
    if n < 2:
        raise ValueError("at least two samples are needed for a variance")
    center = float(values.mean())
    sd = float(values.std(ddof=1))
    half = normal_quantile(1 - alpha / 2) * sd / math.sqrt(n)
    return ConfidenceInterval(center - half, center + half, half)


class Moments(NamedTuple):
    mean: np.ndarray
    covariance: np.ndarray
    mad: np.ndarray


def sample_moments(samples: SampleSet) -> Moments:
    w = samples.weights
    mean = w @ samples.atoms
    centered = samples.atoms - mean
    cov = (centered * w[:, None]).T @ centered
    cov = 0.5 * (cov + cov.T)
    mad = w @ np.abs(centered)
    return Moments(mean, cov, mad)


# ---------------------------------------------------------------------------
# Decision sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecisionSpace:
    """Polyhedron {x : G x <= h, E x = g, lower <= x <= upper}."""

    n: int
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    E: np.ndarray | None = None
    g: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.n)
        G = np.zeros((0, n)) if self.G is None else np.atleast_2d(np.asarray(self.G, dtype=float))
        h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).reshape(-1)
        E = np.zeros((0, n)) if self.E is None else np.atleast_2d(np.asarray(self.E, dtype=float))
        g = np.zeros(0) if self.g is None else np.asarray(self.g, dtype=float).reshape(-1)
        lo = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,))
        up = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,))
        if G.shape != (h.size, n) or E.shape != (g.size, n):
            raise ValueError("inconsistent decision-space rows")
        if np.any(lo > up):
            raise ValueError("lower bound exceeds upper bound")
        for name, val in (("G", G), ("h", h), ("E", E), ("g", g), ("lower", lo), ("upper", up)):
            object.__setattr__(self, name, _frozen(val))
        object.__setattr__(self, "n", n)

    @classmethod
    def box(cls, lower, upper, n: int | None = None) -> "DecisionSpace":
        if n is None:
            n = np.broadcast(np.asarray(lower), np.asarray(upper)).size
        return cls(n, lower=lower, upper=upper)

    @classmethod
    def simplex(cls, n: int) -> "DecisionSpace":
        return cls(n, E=np.ones((1, n)), g=[1.0], lower=0.0)

    @classmethod
    def point(cls, x0) -> "DecisionSpace":
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        return cls(x0.size, E=np.eye(x0.size), g=x0)

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        parts = [0.0]
        if self.h.size:
            parts.append(float(np.max(self.G @ x - self.h)))
        if self.g.size:
            parts.append(float(np.max(np.abs(self.E @ x - self.g))))
        parts.append(float(np.max(self.lower - x)))
        parts.append(float(np.max(x - self.upper)))
        return max(parts)

    def contains(self, x, tol: float = TOL.certified) -> bool:
        return self.violation(x) <= tol

    def to_dict(self) -> dict:
        def enc(v):
            return [None if not np.isfinite(t) else float(t) for t in v]

        return {"n": self.n, "G": self.G.tolist(), "h": self.h.tolist(), "E": self.E.tolist(),
                "g": self.g.tolist(), "lower": enc(self.lower), "upper": enc(self.upper)}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionSpace":
        n = int(data["n"])

        def dec(v, fill):
            if v is None:
                return None
            return np.array([fill if t is None else t for t in v], dtype=float)

        G = np.array(data["G"], float).reshape(-1, n) if data.get("G") else None
        E = np.array(data["E"], float).reshape(-1, n) if data.get("E") else None
        return cls(n, G, data.get("h") or None, E, data.get("g") or None,
                   dec(data.get("lower"), -np.inf), dec(data.get("upper"), np.inf))


@dataclass(frozen=True, eq=False)
class MeanCovPair:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if np.max(np.abs(cov - cov.T), initial=0.0) > TOL.symmetry * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if mean.size and np.linalg.eigvalsh(cov)[0] < -TOL.psd * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(cov))

    @classmethod
    def of(cls, samples: SampleSet) -> "MeanCovPair":
        mom = sample_moments(samples)
        return cls(mom.mean, mom.covariance)


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
