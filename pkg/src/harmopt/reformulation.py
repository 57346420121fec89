"""Conic reformulations of the blended sample/worst-case objective.

For a piecewise affine loss, every builder minimizes

    (1 - lam) * E_samples[f(x, xi)] + lam * sup_{P in ambiguity} E_P[f(x, xi)]

over the decision space. The sample term is the usual epigraph with one
variable ``w_j`` per atom. The worst-case term is replaced by the dual of the
inner maximization, so the result is a single LP or conic program.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .ambiguity import GenericConicAmbiguity, MadAmbiguity, MomentAmbiguity
from .core import DecisionSpace, PiecewiseAffineLoss, SampleSet, per_sample_losses, saa_objective
from .solver import ConicProgram, ProgramBuilder, Solution, SolverSettings, solve, svec_index, svec_size


@dataclass(frozen=True, eq=False)
class HOInstance:
    loss: PiecewiseAffineLoss
    space: DecisionSpace
    samples: SampleSet
    ambiguity: object
    lam: float = 0.0

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if self.loss.n != self.space.n:
            raise ValueError("loss and decision space disagree on the decision dimension")
        if self.loss.m != self.samples.m:
            raise ValueError("loss and samples disagree on the uncertainty dimension")
        if self.ambiguity is not None and getattr(self.ambiguity, "m", self.loss.m) != self.loss.m:
            raise ValueError("ambiguity set has the wrong dimension")

    def with_lam(self, lam: float) -> "HOInstance":
        return HOInstance(self.loss, self.space, self.samples, self.ambiguity, lam)

    def to_dict(self) -> dict:
        return {"loss": self.loss.to_dict(), "space": self.space.to_dict(),
                "samples": self.samples.to_dict(),
                "ambiguity": None if self.ambiguity is None else self.ambiguity.to_dict(),
                "lambda": self.lam}

    @classmethod
    def from_dict(cls, data: dict) -> "HOInstance":
        from .ambiguity import ambiguity_from_dict

        amb = data.get("ambiguity")
        return cls(PiecewiseAffineLoss.from_dict(data["loss"]), DecisionSpace.from_dict(data["space"]),
                   SampleSet.from_dict(data["samples"]), None if amb is None else ambiguity_from_dict(amb),
                   float(data.get("lambda", 0.0)))


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def add_space(bld: ProgramBuilder, space: DecisionSpace, x: np.ndarray) -> None:
    if space.h.size:
        bld.leq([(x, space.G)], space.h, "space_ineq")
    if space.g.size:
        bld.eq([(x, space.E)], space.g, "space_eq")
    lo = np.isfinite(space.lower)
    if lo.any():
        bld.geq([(x[lo], np.eye(lo.sum()))], space.lower[lo], "space_lower")
    hi = np.isfinite(space.upper)
    if hi.any():
        bld.leq([(x[hi], np.eye(hi.sum()))], space.upper[hi], "space_upper")


def affine_rows(loss: PiecewiseAffineLoss, points: np.ndarray, k: int):
    """Coefficients of x and constants of alpha_k(x)^T xi + beta_k(x) for each row xi of ``points``."""
    coef = points @ loss.A[k] + loss.b[k]
    const = points @ loss.a[k] + loss.c[k]
    return coef, const


def add_sample_epigraph(bld: ProgramBuilder, loss: PiecewiseAffineLoss, x, w, atoms) -> None:
    """w_j >= alpha_k(x)^T xi_j + beta_k(x) for every atom j and piece k."""
    n_atoms = atoms.shape[0]
    eye = sp.identity(n_atoms, format="csr")
    for k in range(loss.k):
        coef, const = affine_rows(loss, atoms, k)
        bld.geq([(w, eye), (x, -coef)], const, f"epigraph_{k}")


def _sample_part(loss, space, samples, lam):
    bld = ProgramBuilder()
    x = bld.var("x", loss.n)
    w = bld.var("w", samples.n)
    add_space(bld, space, x)
    add_sample_epigraph(bld, loss, x, w, samples.atoms)
    bld.minimize(w, (1 - lam) * samples.weights)
    return bld, x, w


def build_saa(instance: HOInstance) -> ConicProgram:
    """Epigraph LP of the sample average alone."""
    bld, _, _ = _sample_part(instance.loss, instance.space, instance.samples, 0.0)
    return bld.build()


def build_ho_mad_lp(instance: HOInstance, use_support: bool = False) -> ConicProgram:
    """LP for a MAD ambiguity set.

    The default drops the support box from the inner problem, which gives
    the worst case over all laws on R^m with the prescribed mean and
    deviations; its value is f at the mean plus half the slope spread
    weighted by the deviations. With ``use_support`` each piece gets its own
    dual certificate over the box, so the support is respected exactly.
    """
    amb = instance.ambiguity
    if not isinstance(amb, MadAmbiguity):
        raise TypeError("build_ho_mad_lp needs a MadAmbiguity")
    loss, lam = instance.loss, instance.lam
    m = loss.m
    bld, x, _ = _sample_part(loss, instance.space, instance.samples, lam)
    s = bld.var("s", 1)
    q = bld.var("q", m)
    pi = bld.var("pi", m)
    eye = np.eye(m)
    bld.minimize(s, lam)
    bld.minimize(q, lam * amb.deviation)
    bld.geq([(q, eye)], np.zeros(m), "q_nonneg")
    mu = amb.mean[None, :]
    for k in range(loss.k):
        A_k, a_k = loss.A[k], loss.a[k]
        if not use_support:
            coef, const = affine_rows(loss, mu, k)
            bld.geq([(s, 1.0), (x, -coef)], const, f"mean_{k}")
            bld.geq([(q, eye), (x, -A_k), (pi, -eye)], a_k, f"slope_up_{k}")
            bld.geq([(q, eye), (x, A_k), (pi, eye)], -a_k, f"slope_dn_{k}")
            continue
        # s >= beta_k - pi^T mu + z^T mu + vp^T upper - vm^T lower
        # vp - vm = alpha_k + pi - z, |z| <= q, vp, vm >= 0 on finite sides only
        z = bld.var(f"z_{k}", m)
        hi = np.flatnonzero(np.isfinite(amb.upper))
        lo = np.flatnonzero(np.isfinite(amb.lower))
        vp = bld.var(f"vp_{k}", hi.size)
        vm = bld.var(f"vm_{k}", lo.size)
        bld.geq([(q, eye), (z, -eye)], np.zeros(m), f"z_up_{k}")
        bld.geq([(q, eye), (z, eye)], np.zeros(m), f"z_dn_{k}")
        if hi.size:
            bld.geq([(vp, np.eye(hi.size))], np.zeros(hi.size), f"vp_nonneg_{k}")
        if lo.size:
            bld.geq([(vm, np.eye(lo.size))], np.zeros(lo.size), f"vm_nonneg_{k}")
        bld.eq([(vp, eye[:, hi]), (vm, -eye[:, lo]), (x, -A_k), (pi, -eye), (z, eye)], a_k, f"split_{k}")
        bld.geq([(s, 1.0), (x, -loss.b[k]), (pi, amb.mean), (z, -amb.mean),
                 (vp, -amb.upper[hi]), (vm, amb.lower[lo])], loss.c[k], f"support_{k}")
    return bld.build()


def build_ho_moment_sdp(instance: HOInstance) -> ConicProgram:
    """SDP for a mean-covariance ambiguity set.

    With L the symmetric-eigen factor of the covariance, piece k contributes
    the PSD block

        [ s - beta_k(x) - alpha_k(x)^T mu      (q - L^T alpha_k(x))^T / 2 ]
        [ (q - L^T alpha_k(x)) / 2             Q                          ]

    and the worst-case term is s + gamma2 * trace(Q) + sqrt(gamma1) * ||q||.
    Q is stored by its lower triangle; each stored entry is one variable.
    """
    amb = instance.ambiguity
    if not isinstance(amb, MomentAmbiguity):
        raise TypeError("build_ho_moment_sdp needs a MomentAmbiguity")
    loss, lam = instance.loss, instance.lam
    m = loss.m
    L = amb.factor
    bld, x, _ = _sample_part(loss, instance.space, instance.samples, lam)
    s = bld.var("s", 1)
    q = bld.var("q", m)
    Q = bld.var("Q", svec_size(m))
    t = bld.var("t", 1)
    diag = np.array([svec_index(i, i) for i in range(m)])
    bld.minimize(s, lam)
    bld.minimize(Q[diag], lam * amb.gamma2)
    bld.minimize(t, lam * np.sqrt(amb.gamma1))
    bld.soc([(t, np.eye(m + 1)[:, :1]), (q, np.eye(m + 1)[:, 1:])], np.zeros(m + 1), "norm_q")
    order = m + 1
    rows = svec_size(order)
    r2 = np.sqrt(2.0)
    for k in range(loss.k):
        G_s = np.zeros((rows, 1))
        G_q = np.zeros((rows, m))
        G_Q = np.zeros((rows, svec_size(m)))
        G_x = np.zeros((rows, loss.n))
        h = np.zeros(rows)
        top = svec_index(0, 0)
        G_s[top, 0] = 1.0
        G_x[top] = -(amb.mean @ loss.A[k] + loss.b[k])
        h[top] = amb.mean @ loss.a[k] + loss.c[k]
        LtA = L.T @ loss.A[k]
        Lta = L.T @ loss.a[k]
        for i in range(m):
            r = svec_index(i + 1, 0)
            G_q[r, i] = r2 / 2
            G_x[r] = -r2 / 2 * LtA[i]
            h[r] = r2 / 2 * Lta[i]
            for j in range(i + 1):
                r = svec_index(i + 1, j + 1)
                G_Q[r, svec_index(i, j)] = 1.0 if i == j else r2
        bld.psd([(s, G_s), (q, G_q), (Q, G_Q), (x, G_x)], h, order, f"psd_{k}")
    return bld.build()


def build_generic_h1(instance: HOInstance) -> ConicProgram:
    """Conic dual for moment rows E[A xi + B u] = b and nested confidence sets.

    For every confidence set i and piece k a multiplier theta_ik in the dual
    cone certifies alpha_k(x)^T xi + beta_k(x) - pi^T (A xi + B u) <= sum of
    (kappa_j - tau_j) over the sets j containing set i.
    """
    amb = instance.ambiguity
    if not isinstance(amb, GenericConicAmbiguity):
        raise TypeError("build_generic_h1 needs a GenericConicAmbiguity")
    loss, lam = instance.loss, instance.lam
    bld, x, _ = _sample_part(loss, instance.space, instance.samples, lam)
    n_sets = len(amb.sets)
    pi = bld.var("pi", amb.b.size)
    tau = bld.var("tau", n_sets)
    kappa = bld.var("kappa", n_sets)
    bld.minimize(pi, lam * amb.b)
    bld.minimize(kappa, lam * np.array([cs.p_upper for cs in amb.sets]))
    bld.minimize(tau, -lam * np.array([cs.p_lower for cs in amb.sets]))
    bld.geq([(tau, np.eye(n_sets))], np.zeros(n_sets), "tau_nonneg")
    bld.geq([(kappa, np.eye(n_sets))], np.zeros(n_sets), "kappa_nonneg")
    for i, cs in enumerate(amb.sets):
        anc = np.array(amb.ancestors[i])
        rows = cs.c.size
        for k in range(loss.k):
            theta = bld.var(f"theta_{i}_{k}", rows)
            # c_i^T theta + beta_k(x) <= sum_{j in A_i} (kappa_j - tau_j)
            bld.leq([(theta, cs.c), (x, loss.b[k]), (kappa[anc], -np.ones(anc.size)),
                     (tau[anc], np.ones(anc.size))], -loss.c[k], f"level_{i}_{k}")
            # C_i^T theta + A^T pi = alpha_k(x)
            terms = [(theta, cs.C.T), (x, -loss.A[k])]
            if amb.b.size:
                terms.append((pi, amb.A.T))
            bld.eq(terms, loss.a[k], f"slope_{i}_{k}")
            if amb.h:
                terms = [(theta, cs.D.T)]
                if amb.b.size:
                    terms.append((pi, amb.B.T))
                bld.eq(terms, np.zeros(amb.h), f"aux_{i}_{k}")
            if cs.cone == "nonneg":
                bld.geq([(theta, np.eye(rows))], np.zeros(rows), f"theta_cone_{i}_{k}")
            else:
                bld.soc([(theta, np.eye(rows))], np.zeros(rows), f"theta_cone_{i}_{k}")
    return bld.build()


def build_ho(instance: HOInstance, **kwargs) -> ConicProgram:
    amb = instance.ambiguity
    if instance.lam == 0 and amb is None:
        return build_saa(instance)
    if isinstance(amb, MadAmbiguity):
        return build_ho_mad_lp(instance, **kwargs)
    if isinstance(amb, MomentAmbiguity):
        return build_ho_moment_sdp(instance)
    if isinstance(amb, GenericConicAmbiguity):
        return build_generic_h1(instance)
    raise TypeError(f"no reformulation for ambiguity {type(amb).__name__}")


class HOResult(NamedTuple):
    solution: Solution
    x: np.ndarray | None
    value: float
    program: ConicProgram


def solve_ho(instance: HOInstance, settings: SolverSettings | None = None, **kwargs) -> HOResult:
    prog = build_ho(instance, **kwargs)
    sol = solve(prog, settings)
    x = None if sol.x is None else sol.x[prog.slice("x")]
    return HOResult(sol, x, sol.objective, prog)


# ---------------------------------------------------------------------------
# Wasserstein baseline
# ---------------------------------------------------------------------------

DUAL_NORM = {"l1": np.inf, "l2": 2, "linf": 1}


def lipschitz_constant(loss: PiecewiseAffineLoss, x, norm: str = "l2") -> float:
    """Largest dual norm of the slopes, i.e. the Lipschitz constant of f(x, .)."""
    if norm not in DUAL_NORM:
        raise ValueError(f"norm must be one of {sorted(DUAL_NORM)}")
    return float(np.max(np.linalg.norm(loss.alpha(x), ord=DUAL_NORM[norm], axis=1)))


def wasserstein_penalty_value(loss, x, samples, radius: float, norm: str = "l2") -> float:
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return saa_objective(loss, x, samples) + radius * lipschitz_constant(loss, x, norm)


def build_wasserstein(loss: PiecewiseAffineLoss, space: DecisionSpace, samples: SampleSet,
                      radius: float, norm: str = "l2") -> ConicProgram:
    """Minimize sample average plus radius times the worst slope dual norm."""
    if norm not in DUAL_NORM:
        raise ValueError(f"norm must be one of {sorted(DUAL_NORM)}")
    bld, x, _ = _sample_part(loss, space, samples, 0.0)
    t = bld.var("t", 1)
    bld.minimize(t, radius)
    m = loss.m
    for k in range(loss.k):
        A_k, a_k = loss.A[k], loss.a[k]
        if norm == "l2":
            G_t = np.zeros((m + 1, 1))
            G_t[0, 0] = 1.0
            G_x = np.vstack([np.zeros((1, loss.n)), A_k])
            bld.soc([(t, G_t), (x, G_x)], np.concatenate([[0.0], -a_k]), f"lip_{k}")
        elif norm == "l1":
            ones = np.ones((m, 1))
            bld.geq([(t, ones), (x, -A_k)], a_k, f"lip_up_{k}")
            bld.geq([(t, ones), (x, A_k)], -a_k, f"lip_dn_{k}")
        else:
            v = bld.var(f"v_{k}", m)
            bld.geq([(v, np.eye(m)), (x, -A_k)], a_k, f"abs_up_{k}")
            bld.geq([(v, np.eye(m)), (x, A_k)], -a_k, f"abs_dn_{k}")
            bld.geq([(t, 1.0), (v, -np.ones(m))], 0.0, f"lip_{k}")
    return bld.build()


# ---------------------------------------------------------------------------
# Brute-force inner maximization
# ---------------------------------------------------------------------------


class OracleResult(NamedTuple):
    value: float
    status: str
    atoms: np.ndarray
    probs: np.ndarray


def _oracle_grid(axes):
    return np.array(list(itertools.product(*axes)), dtype=float)


def _oracle_lp(loss, x, amb, grid, settings):
    vals = loss.values(x, grid)
    n_pts = grid.shape[0]
    bld = ProgramBuilder()
    p = bld.var("p", n_pts)
    bld.minimize(p, -vals)
    bld.geq([(p, sp.identity(n_pts))], np.zeros(n_pts), "p_nonneg")
    bld.eq([(p, np.ones(n_pts))], 1.0, "total")
    dev = grid - amb.mean
    m = grid.shape[1]
    if isinstance(amb, MadAmbiguity):
        bld.eq([(p, grid.T)], amb.mean, "mean")
        bld.leq([(p, np.abs(dev).T)], amb.deviation, "deviation")
    else:
        Linv = np.linalg.inv(amb.factor)
        white = dev @ Linv.T
        if amb.gamma1 == 0:
            bld.eq([(p, grid.T)], amb.mean, "mean")
        else:
            G = np.vstack([np.zeros((1, n_pts)), white.T])
            bld.soc([(p, G)], np.concatenate([[-np.sqrt(amb.gamma1)], np.zeros(m)]), "mean_ellipsoid")
        rows = svec_size(m)
        G = np.zeros((rows, n_pts))
        h = np.zeros(rows)
        for i in range(m):
            for j in range(i + 1):
                r = svec_index(i, j)
                scale = 1.0 if i == j else np.sqrt(2.0)
                G[r] = -scale * dev[:, i] * dev[:, j]
                h[r] = -scale * amb.gamma2 * amb.covariance[i, j]
        bld.psd([(p, G)], h, m, "second_moment")
    sol = solve(bld.build(), settings)
    if not sol.ok:
        return OracleResult(np.nan, sol.status, grid[:0], np.zeros(0))
    probs = np.clip(sol.x, 0.0, None)
    return OracleResult(-sol.objective, "optimal", grid, probs)


def inner_worst_case_oracle(loss: PiecewiseAffineLoss, x, ambiguity, resolution: int = 50,
                            box=None, refine: int = 0, max_centers: int = 40,
                            settings: SolverSettings | None = None) -> OracleResult:
    """Worst-case expectation over laws supported on a finite grid.

    The grid is uniform over ``box`` (default: the MAD support, or eight
    standard deviations around the mean for a mean-covariance set) with the
    mean injected on every axis. Each of the ``refine`` extra rounds keeps the
    ``max_centers`` heaviest atoms and surrounds them with a local grid four
    times finer than the previous spacing.
    """
    if not isinstance(ambiguity, (MadAmbiguity, MomentAmbiguity)):
        raise TypeError("the oracle covers MAD and mean-covariance sets")
    m = loss.m
    if m > 3:
        raise ValueError("the oracle is limited to m <= 3")
    if box is None:
        if isinstance(ambiguity, MadAmbiguity):
            if not ambiguity.bounded:
                raise ValueError("a bounded box is required")
            box = (ambiguity.lower, ambiguity.upper)
        else:
            half = 8 * np.sqrt(ambiguity.gamma2 * np.diag(ambiguity.covariance))
            half = half * (1 + np.sqrt(ambiguity.gamma1))
            box = (ambiguity.mean - half, ambiguity.mean + half)
    lo = np.broadcast_to(np.asarray(box[0], float), (m,))
    hi = np.broadcast_to(np.asarray(box[1], float), (m,))
    axes = [np.union1d(np.linspace(lo[i], hi[i], resolution), [ambiguity.mean[i]]) for i in range(m)]
    grid = _oracle_grid(axes)
    res = _oracle_lp(loss, x, ambiguity, grid, settings)
    step = (hi - lo) / max(resolution - 1, 1)
    for _ in range(refine):
        if res.status != "optimal":
            break
        order = np.argsort(-res.probs, kind="stable")[:max_centers]
        order = order[res.probs[order] > 1e-6 * res.probs[order[0]]]
        heavy = res.atoms[order]
        offsets = _oracle_grid([np.linspace(-s, s, 9) for s in step])
        extra = (heavy[:, None, :] + offsets[None, :, :]).reshape(-1, m)
        extra = np.clip(extra, lo, hi)
        grid = np.unique(np.vstack([heavy, extra]), axis=0)
        res = _oracle_lp(loss, x, ambiguity, grid, settings)
        step = step / 4
    return res


# ---------------------------------------------------------------------------
# Problem wrapper used by the weight estimators
# ---------------------------------------------------------------------------


@dataclass
class PiecewiseHOProblem:
    """Solve/evaluate interface over a piecewise affine loss.

    ``ambiguity`` is either a fixed set or a callable building one from the
    training samples.
    """

    loss: PiecewiseAffineLoss
    space: DecisionSpace
    ambiguity: object
    settings: SolverSettings | None = None
    builder_options: dict = field(default_factory=dict)
    evaluator: Callable | None = None

    def ambiguity_for(self, samples: SampleSet):
        return self.ambiguity(samples) if callable(self.ambiguity) else self.ambiguity

    def solve(self, samples: SampleSet, lam: float) -> np.ndarray | None:
        inst = HOInstance(self.loss, self.space, samples, self.ambiguity_for(samples), lam)
        res = solve_ho(inst, self.settings, **self.builder_options)
        return res.x if res.solution.ok else None

    def losses(self, x, samples: SampleSet) -> np.ndarray:
        return per_sample_losses(self.loss, x, samples)

    def evaluate(self, x, samples: SampleSet) -> float:
        if self.evaluator is not None:
            return self.evaluator(x, samples)
        return saa_objective(self.loss, x, samples)

    def feasible(self, x) -> bool:
        return self.space.contains(x)
