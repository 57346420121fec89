"""Ambiguity sets, mixture moments, the Gelbrich distance and worst-case marginals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .config import TOL
from .core import MeanCovPair, SampleSet, _frozen, sample_moments


def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


def _enc(v):
    return [None if not np.isfinite(t) else float(t) for t in np.asarray(v, float)]


def _dec(v, fill):
    return np.array([fill if t is None else t for t in v], dtype=float)


@dataclass(frozen=True, eq=False)
class MadAmbiguity:
    """Distributions on the box [lower, upper] with mean ``mean`` and E|xi_i - mean_i| <= deviation_i.

    Infinite box sides are allowed; the worst-case marginal routines then refuse
    to run because the extremal law would put mass at infinity.
    """

    lower: np.ndarray
    mean: np.ndarray
    upper: np.ndarray
    deviation: np.ndarray

    def __post_init__(self):
        mean = _vec(self.mean)
        m = mean.size
        lower = np.broadcast_to(_vec(self.lower), (m,))
        upper = np.broadcast_to(_vec(self.upper), (m,))
        dev = np.broadcast_to(_vec(self.deviation), (m,))
        if np.any(lower > mean) or np.any(mean > upper):
            raise ValueError("mean must lie inside the support box")
        if np.any(dev < 0) or not np.all(np.isfinite(dev)) or not np.all(np.isfinite(mean)):
            raise ValueError("deviations must be finite and nonnegative")
        for name, val in (("lower", lower), ("mean", mean), ("upper", upper), ("deviation", dev)):
            object.__setattr__(self, name, _frozen(val))

    kind = "mad"

    @property
    def m(self) -> int:
        return self.mean.size

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def clipped_deviation(self) -> np.ndarray:
        """Largest deviation a law on the box with this mean can reach, capped at ``deviation``."""
        lo, mu, hi = self.lower, self.mean, self.upper
        cap = np.full(self.m, np.inf)
        for i in range(self.m):
            if np.isfinite(lo[i]) and np.isfinite(hi[i]):
                cap[i] = 2 * (hi[i] - mu[i]) * (mu[i] - lo[i]) / (hi[i] - lo[i]) if hi[i] > lo[i] else 0.0
            elif np.isfinite(lo[i]):
                cap[i] = 2 * (mu[i] - lo[i])
            elif np.isfinite(hi[i]):
                cap[i] = 2 * (hi[i] - mu[i])
        return np.minimum(self.deviation, cap)

    @classmethod
    def from_samples(cls, samples: SampleSet, lower=None, upper=None) -> "MadAmbiguity":
        mom = sample_moments(samples)
        lo = samples.atoms.min(axis=0) if lower is None else lower
        hi = samples.atoms.max(axis=0) if upper is None else upper
        return cls(lo, mom.mean, hi, mom.mad)

    def to_dict(self) -> dict:
        return {"kind": "mad", "lower": _enc(self.lower), "mean": self.mean.tolist(),
                "upper": _enc(self.upper), "deviation": self.deviation.tolist()}


@dataclass(frozen=True, eq=False)
class MomentAmbiguity:
    """Mean in an ellipsoid around ``mean`` of size gamma1, second moment at most gamma2 * covariance."""

    mean: np.ndarray
    covariance: np.ndarray
    gamma1: float = 0.0
    gamma2: float = 1.0
    eigvecs: np.ndarray = field(init=False, repr=False)
    eigvals: np.ndarray = field(init=False, repr=False)

    kind = "meancov"

    def __post_init__(self):
        mean = _vec(self.mean)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if np.max(np.abs(cov - cov.T)) > TOL.symmetry * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if self.gamma1 < 0 or self.gamma2 < 1:
            raise ValueError("need gamma1 >= 0 and gamma2 >= 1")
        lam, U = np.linalg.eigh(cov)
        if lam[0] <= 1e-12:
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(cov))
        object.__setattr__(self, "gamma1", float(self.gamma1))
        object.__setattr__(self, "gamma2", float(self.gamma2))
        object.__setattr__(self, "eigvecs", _frozen(U))
        object.__setattr__(self, "eigvals", _frozen(lam))

    @property
    def m(self) -> int:
        return self.mean.size

    @property
    def factor(self) -> np.ndarray:
        """L = U diag(sqrt(eigvals)), so covariance = L L^T."""
        return self.eigvecs * np.sqrt(self.eigvals)

    def to_dict(self) -> dict:
        return {"kind": "meancov", "mean": self.mean.tolist(), "covariance": self.covariance.tolist(),
                "gamma1": self.gamma1, "gamma2": self.gamma2}


@dataclass(frozen=True, eq=False)
class ConfidenceSet:
    """{(xi, u) : c - C xi - D u in cone} holding with probability in [p_lower, p_upper]."""

    C: np.ndarray
    D: np.ndarray
    c: np.ndarray
    cone: str = "nonneg"
    p_lower: float = 1.0
    p_upper: float = 1.0

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        c = _vec(self.c)
        D = np.asarray(self.D, dtype=float).reshape(c.size, -1)
        if C.shape[0] != c.size:
            raise ValueError("confidence-set rows are inconsistent")
        if self.cone not in ("nonneg", "soc"):
            raise ValueError("confidence sets support the nonneg and soc cones only")
        if not 0 <= self.p_lower <= self.p_upper <= 1:
            raise ValueError("need 0 <= p_lower <= p_upper <= 1")
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "D", _frozen(D))
        object.__setattr__(self, "c", _frozen(c))

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "D": self.D.tolist(), "c": self.c.tolist(), "cone": self.cone,
                "p_lower": self.p_lower, "p_upper": self.p_upper}


@dataclass(frozen=True, eq=False)
class GenericConicAmbiguity:
    """Laws of (xi, u) with E[A xi + B u] = b and probability bounds on nested confidence sets.

    ``ancestors[i]`` lists the sets containing set ``i`` (itself included).
    When omitted it is derived by polyhedral containment tests, which only
    works when every set uses the nonnegative orthant.
    """

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    sets: tuple[ConfidenceSet, ...]
    ancestors: tuple[tuple[int, ...], ...] | None = None

    kind = "generic"

    def __post_init__(self):
        b = _vec(self.b)
        sets = tuple(self.sets)
        if not sets:
            raise ValueError("at least one confidence set is required")
        m = sets[0].C.shape[1]
        h = sets[0].D.shape[1]
        A = np.asarray(self.A, dtype=float).reshape(b.size, m)
        B = np.asarray(self.B, dtype=float).reshape(b.size, h)
        for s in sets:
            if s.C.shape[1] != m or s.D.shape[1] != h:
                raise ValueError("confidence sets disagree on (m, h)")
        last = sets[-1]
        if last.p_lower != 1 or last.p_upper != 1:
            raise ValueError("the outermost confidence set must hold with probability one")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "sets", sets)
        if self.ancestors is None:
            if len(sets) == 1:
                anc = ((0,),)
            elif all(s.cone == "nonneg" for s in sets):
                anc = _polyhedral_ancestors(sets)
            else:
                raise ValueError("nesting of conic confidence sets must be declared through `ancestors`")
        else:
            anc = tuple(tuple(sorted(set(a) | {i})) for i, a in enumerate(self.ancestors))
            if len(anc) != len(sets):
                raise ValueError("one ancestor list per confidence set is required")
        object.__setattr__(self, "ancestors", anc)

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def h(self) -> int:
        return self.B.shape[1]

    def to_dict(self) -> dict:
        return {"kind": "generic", "A": self.A.tolist(), "B": self.B.tolist(), "b": self.b.tolist(),
                "sets": [s.to_dict() for s in self.sets], "ancestors": [list(a) for a in self.ancestors]}


def _lp_max(obj, C, c):
    res = linprog(-obj, A_ub=C, b_ub=c, bounds=(None, None), method="highs")
    if res.status == 2:
        return None  # empty
    if res.status == 3:
        return np.inf
    return -res.fun


def _polyhedral_ancestors(sets) -> tuple[tuple[int, ...], ...]:
    """Containment graph of polyhedra {z : C z <= c}; each pair must be nested or disjoint."""
    mats = [(np.hstack([s.C, s.D]), s.c) for s in sets]

    def contained(i, j):
        Ci, ci = mats[i]
        Cj, cj = mats[j]
        for row, rhs in zip(Cj, cj):
            val = _lp_max(row, Ci, ci)
            if val is None:
                return True
            if val > rhs + 1e-9:
                return False
        return True

    def disjoint(i, j):
        Ci, ci = mats[i]
        Cj, cj = mats[j]
        res = linprog(np.zeros(Ci.shape[1]), A_ub=np.vstack([Ci, Cj]), b_ub=np.concatenate([ci, cj]),
                      bounds=(None, None), method="highs")
        return res.status == 2

    k = len(sets)
    anc = []
    for i in range(k):
        row = [i]
        for j in range(k):
            if i == j:
                continue
            if contained(i, j):
                row.append(j)
            elif not contained(j, i) and not disjoint(i, j):
                raise ValueError(f"confidence sets {i} and {j} are neither nested nor disjoint")
        anc.append(tuple(sorted(row)))
    return tuple(anc)


def mad_as_generic(mad: MadAmbiguity, use_support: bool = False) -> GenericConicAmbiguity:
    """Encode the MAD set with an auxiliary u >= |xi - mean| and E u = deviation.

    With ``use_support`` the finite box sides are added as rows of the single
    confidence set.
    """
    m = mad.m
    eye = np.eye(m)
    A = np.vstack([eye, np.zeros((m, m))])
    B = np.vstack([np.zeros((m, m)), eye])
    b = np.concatenate([mad.mean, mad.deviation])
    C = [eye, -eye]
    D = [-eye, -eye]
    c = [mad.mean, -mad.mean]
    if use_support:
        hi = np.isfinite(mad.upper)
        lo = np.isfinite(mad.lower)
        C += [eye[hi], -eye[lo]]
        D += [np.zeros((hi.sum(), m)), np.zeros((lo.sum(), m))]
        c += [mad.upper[hi], -mad.lower[lo]]
    conf = ConfidenceSet(np.vstack(C), np.vstack(D), np.concatenate(c))
    return GenericConicAmbiguity(A, B, b, (conf,))


@dataclass(frozen=True, eq=False)
class MixtureAmbiguity:
    empirical: SampleSet
    information: object
    lam: float

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError("mixture weight must lie in [0, 1]")


def ambiguity_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "mad":
        return MadAmbiguity(_dec(data["lower"], -np.inf), data["mean"], _dec(data["upper"], np.inf),
                            data["deviation"])
    if kind == "meancov":
        return MomentAmbiguity(data["mean"], data["covariance"], data.get("gamma1", 0.0), data.get("gamma2", 1.0))
    if kind == "generic":
        sets = tuple(ConfidenceSet(s["C"], s["D"], s["c"], s.get("cone", "nonneg"),
                                   s.get("p_lower", 1.0), s.get("p_upper", 1.0)) for s in data["sets"])
        anc = data.get("ancestors")
        return GenericConicAmbiguity(data["A"], data["B"], data["b"], sets,
                                     None if anc is None else tuple(tuple(a) for a in anc))
    raise ValueError(f"unknown ambiguity kind {kind!r}")


# ---------------------------------------------------------------------------
# Analytics
# ---------------------------------------------------------------------------


def psd_sqrt(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    mat = 0.5 * (mat + mat.T)
    w, V = np.linalg.eigh(mat)
    # eigenvalues at rounding level are zero; their roots would not be small
    cut = mat.shape[0] * np.finfo(float).eps * max(np.abs(w).max(initial=0.0), 1e-300)
    root = (V * np.sqrt(np.where(w > cut, w, 0.0))) @ V.T
    return 0.5 * (root + root.T)


def gelbrich_distance(p1: MeanCovPair, p2: MeanCovPair) -> float:
    """Gelbrich distance between two mean-covariance pairs.

    The covariance term uses the Procrustes form min_U ||S1^1/2 - S2^1/2 U||_F
    over orthogonal U, which equals the trace formula but avoids its
    cancellation when the covariances are close.
    """
    if p1.mean.shape != p2.mean.shape:
        raise ValueError("pairs have different dimensions")
    root1 = psd_sqrt(p1.covariance)
    root2 = psd_sqrt(p2.covariance)
    W, _, Vt = np.linalg.svd(root2.T @ root1)
    diff = root1 - root2 @ (W @ Vt)
    mean_sq = float(np.sum((p1.mean - p2.mean) ** 2))
    return float(np.sqrt(mean_sq + np.sum(diff * diff)))


def mixture_moments(mix: MixtureAmbiguity, info_pair: MeanCovPair) -> MeanCovPair:
    base = MeanCovPair.of(mix.empirical)
    return mix_pairs(base, info_pair, mix.lam)


def mix_pairs(base: MeanCovPair, info: MeanCovPair, lam: float) -> MeanCovPair:
    d = info.mean - base.mean
    mean = (1 - lam) * base.mean + lam * info.mean
    cov = (1 - lam) * base.covariance + lam * info.covariance + lam * (1 - lam) * np.outer(d, d)
    return MeanCovPair(mean, 0.5 * (cov + cov.T))


class ThreePointLaw(NamedTuple):
    atoms: np.ndarray
    probs: np.ndarray


def mad_worst_case_marginal(lower: float, mean: float, upper: float, deviation: float) -> ThreePointLaw:
    """Extremal law on {lower, mean, upper} with the given mean and (clipped) deviation.

    Always returns three atoms; an endpoint that coincides with the mean
    carries zero probability.
    """
    if deviation < 0:
        raise ValueError("deviation must be nonnegative")
    if not lower <= mean <= upper:
        raise ValueError("mean must lie inside [lower, upper]")
    if not (np.isfinite(lower) and np.isfinite(upper)):
        raise ValueError("worst-case marginals need a bounded support")
    atoms = np.array([lower, mean, upper], dtype=float)
    left, right = mean - lower, upper - mean
    if left <= 0 or right <= 0:
        return ThreePointLaw(atoms, np.array([0.0, 1.0, 0.0]))
    clipped = min(deviation, 2 * right * left / (upper - lower))
    p_lo = clipped / (2 * left)
    p_hi = clipped / (2 * right)
    # at full clipping the middle mass is zero up to rounding
    return ThreePointLaw(atoms, np.array([p_lo, max(1.0 - p_lo - p_hi, 0.0), p_hi]))


@dataclass
class MembershipReport:
    ok: bool
    violations: dict[str, float]

    def __bool__(self) -> bool:
        return self.ok


def membership_check(samples: SampleSet, amb, tol: float = TOL.membership) -> MembershipReport:
    """Does the empirical law of ``samples`` belong to ``amb``?"""
    if samples.m != amb.m:
        raise ValueError("dimension mismatch")
    viol: dict[str, float] = {}
    w, X = samples.weights, samples.atoms
    if isinstance(amb, MadAmbiguity):
        mean = w @ X
        viol["mean"] = float(np.max(np.abs(mean - amb.mean)))
        viol["deviation"] = float(np.max(w @ np.abs(X - amb.mean) - amb.deviation))
        viol["support"] = float(max(np.max(amb.lower - X), np.max(X - amb.upper)))
    elif isinstance(amb, MomentAmbiguity):
        mean = w @ X
        d = mean - amb.mean
        ell = float(d @ np.linalg.solve(amb.covariance, d))
        viol["ellipsoid"] = ell - amb.gamma1
        centered = X - amb.mean
        second = (centered * w[:, None]).T @ centered
        gap = amb.gamma2 * amb.covariance - second
        viol["second_moment"] = float(-np.linalg.eigvalsh(0.5 * (gap + gap.T))[0])
    else:
        raise TypeError("membership checks cover MAD and mean-covariance sets")
    ok = all(v <= tol for v in viol.values())
    return MembershipReport(ok, viol)
