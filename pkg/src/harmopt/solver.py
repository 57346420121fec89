"""Conic programs and the backend adapter.

A program is ``minimize c^T x + offset`` subject to blocks ``b - A x in K``
where ``K`` is one of

* ``zero``: the origin,
* ``nonneg``: the nonnegative orthant,
* ``soc``: the second-order cone ``{(t, u) : ||u||_2 <= t}``,
* ``psd``: symmetric PSD matrices of order ``d`` stored as ``d(d+1)/2``
  entries of the lower triangle, walked row by row
  ((0,0), (1,0), (1,1), (2,0), ...), off-diagonal entries scaled by sqrt(2).

Pure LPs go to HiGHS through scipy; anything with a cone goes to Clarabel.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .config import TOL

CONES = ("zero", "nonneg", "soc", "psd")
STATUSES = ("optimal", "infeasible", "unbounded", "numerical_failure")
SQRT2 = math.sqrt(2.0)


def svec_size(d: int) -> int:
    return d * (d + 1) // 2


def svec_index(i: int, j: int) -> int:
    """Position of entry (i, j), i >= j, in the packed lower triangle."""
    if i < j:
        i, j = j, i
    return i * (i + 1) // 2 + j


def svec(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    d = mat.shape[0]
    out = np.empty(svec_size(d))
    for i in range(d):
        for j in range(i + 1):
            out[svec_index(i, j)] = mat[i, j] if i == j else SQRT2 * mat[i, j]
    return out


def smat(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    d = int(round((math.sqrt(8 * vec.size + 1) - 1) / 2))
    out = np.empty((d, d))
    for i in range(d):
        for j in range(i + 1):
            v = vec[svec_index(i, j)]
            if i != j:
                v /= SQRT2
            out[i, j] = out[j, i] = v
    return out


@dataclass(eq=False)
class ConeBlock:
    A: sp.csr_matrix
    b: np.ndarray
    cone: str
    dim: int
    name: str = ""

    @property
    def rows(self) -> int:
        return self.b.size


@dataclass(eq=False)
class ConicProgram:
    n: int
    c: np.ndarray
    blocks: list[ConeBlock]
    offset: float = 0.0
    variables: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.shape != (self.n,):
            raise ValueError("objective length does not match variable count")
        for blk in self.blocks:
            if blk.cone not in CONES:
                raise ValueError(f"unknown cone {blk.cone!r}")
            if blk.A.shape != (blk.rows, self.n):
                raise ValueError(f"block {blk.name!r} has shape {blk.A.shape}, expected ({blk.rows}, {self.n})")
            expected = svec_size(blk.dim) if blk.cone == "psd" else blk.dim
            if blk.rows != expected:
                raise ValueError(f"block {blk.name!r} has {blk.rows} rows for a {blk.cone}({blk.dim}) cone")
            if blk.cone == "soc" and blk.dim < 1:
                raise ValueError("second-order cone needs dimension >= 1")

    @property
    def is_lp(self) -> bool:
        return all(b.cone in ("zero", "nonneg") for b in self.blocks)

    def slice(self, name: str) -> slice:
        lo, hi = self.variables[name]
        return slice(lo, hi)

    def value(self, x, name: str) -> np.ndarray:
        return np.asarray(x)[self.slice(name)]

    def to_json(self) -> str:
        blocks = []
        for blk in self.blocks:
            coo = blk.A.tocoo()
            blocks.append({"name": blk.name, "cone": blk.cone, "dim": blk.dim,
                           "rows": coo.row.tolist(), "cols": coo.col.tolist(),
                           "vals": coo.data.tolist(), "b": blk.b.tolist()})
        return json.dumps({"n": self.n, "c": self.c.tolist(), "offset": self.offset,
                           "variables": self.variables, "blocks": blocks})

    @classmethod
    def from_json(cls, text: str) -> "ConicProgram":
        data = json.loads(text)
        n = data["n"]
        blocks = []
        for blk in data["blocks"]:
            b = np.array(blk["b"], dtype=float)
            A = sp.csr_matrix((blk["vals"], (blk["rows"], blk["cols"])), shape=(b.size, n))
            blocks.append(ConeBlock(A, b, blk["cone"], blk["dim"], blk["name"]))
        variables = {k: tuple(v) for k, v in data.get("variables", {}).items()}
        return cls(n, np.array(data["c"]), blocks, data.get("offset", 0.0), variables)


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`.

    Variables are declared by name and returned as index arrays. A linear
    expression is a list of ``(indices, matrix)`` terms meaning
    ``sum matrix @ x[indices]``; scalars and 1-D arrays act as row vectors.
    """

    def __init__(self):
        self.n = 0
        self.variables: dict[str, tuple[int, int]] = {}
        self._obj: list[tuple[np.ndarray, np.ndarray]] = []
        self._blocks: list[tuple[list, np.ndarray, str, int, str]] = []
        self.offset = 0.0

    def var(self, name: str, size: int) -> np.ndarray:
        if name in self.variables:
            raise ValueError(f"variable {name!r} declared twice")
        idx = np.arange(self.n, self.n + size)
        self.variables[name] = (self.n, self.n + size)
        self.n += size
        return idx

    def minimize(self, idx, coef) -> None:
        idx = np.asarray(idx, dtype=int).reshape(-1)
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
        self._obj.append((idx, coef.copy()))

    @staticmethod
    def _rows(terms, nrows):
        rows, cols, vals = [], [], []
        for idx, mat in terms:
            idx = np.asarray(idx, dtype=int).reshape(-1)
            if sp.issparse(mat):
                coo = mat.tocoo()
            else:
                mat = np.asarray(mat, dtype=float)
                if mat.ndim == 0:
                    mat = np.full((nrows, idx.size), float(mat)) if idx.size == 1 else mat * np.eye(nrows)
                elif mat.ndim == 1:
                    mat = mat[None, :]
                coo = sp.coo_matrix(mat)
            if coo.shape != (nrows, idx.size):
                raise ValueError(f"term shape {coo.shape} does not match ({nrows}, {idx.size})")
            rows.append(coo.row)
            cols.append(idx[coo.col])
            vals.append(coo.data)
        if not rows:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def _add(self, terms, rhs, cone, dim, name, sign):
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float)).reshape(-1)
        r, c, v = self._rows(terms, rhs.size)
        # stored as b - A x in K with A = sign * G, b = sign * h
        self._blocks.append(((r, c, sign * v), sign * rhs, cone, dim, name))

    def geq(self, terms, rhs, name: str = "") -> None:
        """G x >= rhs."""
        self._add(terms, rhs, "nonneg", np.size(rhs), name, -1.0)

    def leq(self, terms, rhs, name: str = "") -> None:
        """G x <= rhs."""
        self._add(terms, rhs, "nonneg", np.size(rhs), name, 1.0)

    def eq(self, terms, rhs, name: str = "") -> None:
        self._add(terms, rhs, "zero", np.size(rhs), name, 1.0)

    def soc(self, terms, rhs, name: str = "") -> None:
        """G x - rhs lies in the second-order cone (first row is the norm bound)."""
        self._add(terms, rhs, "soc", np.size(rhs), name, -1.0)

    def psd(self, terms, rhs, order: int, name: str = "") -> None:
        """svec^{-1}(G x - rhs) is positive semidefinite."""
        self._add(terms, rhs, "psd", order, name, -1.0)

    def build(self) -> ConicProgram:
        c = np.zeros(self.n)
        for idx, coef in self._obj:
            np.add.at(c, idx, coef)
        blocks = []
        for (r, cc, v), b, cone, dim, name in self._blocks:
            A = sp.csr_matrix((v, (r, cc)), shape=(b.size, self.n))
            blocks.append(ConeBlock(A, b, cone, int(dim), name))
        return ConicProgram(self.n, c, blocks, self.offset, dict(self.variables))


@dataclass(frozen=True)
class SolverSettings:
    abs_tol: float = TOL.solver_abs
    rel_tol: float = TOL.solver_rel
    max_iter: int = 500
    backend: str = "auto"


@dataclass
class Solution:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int = 0
    wall_time: float = 0.0
    backend: str = ""
    dual_objective: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _failure(status, t0, backend, iters=0):
    return Solution(status, None, math.nan, iters, time.perf_counter() - t0, backend)


def _solve_highs(prog: ConicProgram, settings: SolverSettings) -> Solution:
    t0 = time.perf_counter()
    eq = [b for b in prog.blocks if b.cone == "zero"]
    ineq = [b for b in prog.blocks if b.cone == "nonneg"]
    A_eq = sp.vstack([b.A for b in eq]).tocsr() if eq else None
    b_eq = np.concatenate([b.b for b in eq]) if eq else None
    A_ub = sp.vstack([b.A for b in ineq]).tocsr() if ineq else None
    b_ub = np.concatenate([b.b for b in ineq]) if ineq else None
    tol = min(settings.abs_tol, 1e-7)
    try:
        res = linprog(prog.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=(None, None), method="highs",
                      options={"primal_feasibility_tolerance": tol,
                               "dual_feasibility_tolerance": tol,
                               "maxiter": max(settings.max_iter, 100000)})
    except Exception:
        return _failure("numerical_failure", t0, "highs")
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return _failure("infeasible", t0, "highs", iters)
    if res.status == 3:
        return _failure("unbounded", t0, "highs", iters)
    if res.status != 0 or res.x is None:
        return _failure("numerical_failure", t0, "highs", iters)
    dual = None
    try:
        dual = prog.offset
        if ineq:
            dual += float(b_ub @ res.ineqlin.marginals)
        if eq:
            dual += float(b_eq @ res.eqlin.marginals)
    except (AttributeError, TypeError):
        dual = None
    return Solution("optimal", np.asarray(res.x), float(res.fun) + prog.offset, iters,
                    time.perf_counter() - t0, "highs", dual)


def _solve_clarabel(prog: ConicProgram, settings: SolverSettings) -> Solution:
    import clarabel

    t0 = time.perf_counter()
    cones = []
    for blk in prog.blocks:
        if blk.rows == 0:
            continue
        if blk.cone == "zero":
            cones.append(clarabel.ZeroConeT(blk.rows))
        elif blk.cone == "nonneg":
            cones.append(clarabel.NonnegativeConeT(blk.rows))
        elif blk.cone == "soc":
            cones.append(clarabel.SecondOrderConeT(blk.rows))
        else:
            cones.append(clarabel.PSDTriangleConeT(blk.dim))
    used = [b for b in prog.blocks if b.rows]
    A = sp.vstack([b.A for b in used]).tocsc() if used else sp.csc_matrix((0, prog.n))
    b = np.concatenate([b.b for b in used]) if used else np.zeros(0)
    P = sp.csc_matrix((prog.n, prog.n))
    opts = clarabel.DefaultSettings()
    opts.verbose = False
    opts.tol_gap_abs = settings.abs_tol
    opts.tol_gap_rel = settings.rel_tol
    opts.tol_feas = settings.abs_tol
    opts.max_iter = settings.max_iter
    opts.max_threads = 1
    try:
        sol = clarabel.DefaultSolver(P, prog.c, A, b, cones, opts).solve()
    except Exception:
        return _failure("numerical_failure", t0, "clarabel")
    status = str(sol.status)
    iters = int(sol.iterations)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return _failure("infeasible", t0, "clarabel", iters)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return _failure("unbounded", t0, "clarabel", iters)
    x = np.asarray(sol.x, dtype=float)
    out = Solution("optimal", x, float(prog.c @ x) + prog.offset, iters,
                   time.perf_counter() - t0, "clarabel", float(sol.obj_val_dual) + prog.offset)
    if status == "Solved":
        return out
    if status == "AlmostSolved" and verify_solution(prog, out).max_violation <= TOL.certified:
        return out
    return _failure("numerical_failure", t0, "clarabel", iters)


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> Solution:
    """Solve ``program``; failures are reported through ``Solution.status``."""
    settings = settings or SolverSettings()
    if not isinstance(program, ConicProgram):
        raise TypeError("solve expects a ConicProgram")
    backend = settings.backend
    if backend == "auto":
        backend = "highs" if program.is_lp else "clarabel"
    if backend == "highs":
        if not program.is_lp:
            raise ValueError("the LP backend cannot handle conic blocks")
        return _solve_highs(program, settings)
    if backend == "clarabel":
        return _solve_clarabel(program, settings)
    raise ValueError(f"unknown backend {backend!r}")


@dataclass
class ViolationReport:
    blocks: list[tuple[str, str, float]]
    tol: float = TOL.certified

    @property
    def max_violation(self) -> float:
        return max((v for _, _, v in self.blocks), default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.tol


def cone_violation(residual: np.ndarray, cone: str) -> float:
    """Distance-style violation of ``residual`` in ``cone`` (0 when inside)."""
    if residual.size == 0:
        return 0.0
    if cone == "zero":
        return float(np.max(np.abs(residual)))
    if cone == "nonneg":
        return float(max(0.0, -residual.min()))
    if cone == "soc":
        return float(max(0.0, np.linalg.norm(residual[1:]) - residual[0]))
    return float(max(0.0, -np.linalg.eigvalsh(smat(residual))[0]))


def verify_solution(program: ConicProgram, solution: Solution, tol: float | None = None) -> ViolationReport:
    """Recompute every block residual ``b - A x`` and measure its cone violation."""
    x = np.asarray(solution.x, dtype=float)
    report = []
    for blk in program.blocks:
        res = blk.b - blk.A @ x
        report.append((blk.name, blk.cone, cone_violation(res, blk.cone)))
    return ViolationReport(report, TOL.certified if tol is None else tol)
