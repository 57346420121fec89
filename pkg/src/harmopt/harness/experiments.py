"""Benchmark orchestration: data generation, weight estimation, solves, scoring, persistence."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import _fmt
from ..problems.lotsizing import (generate_lotsizing_instance, long_worst_case, lotsizing_ho_solve,
                                  lotsizing_out_of_sample, sample_demands)
from ..problems.portfolio import PortfolioInstance, generate_portfolio_samples, portfolio_problem
from ..reformulation import HOInstance, build_wasserstein, solve_ho
from ..scenred import local_search_reduce, ho_reduce, random_reduce
from ..solver import SolverSettings, solve
from ..weights import estimate_c_crossval, estimate_c_fixed, estimate_c_gap, fold_indices
from .evaluation import approximation_error

SCHEMA_VERSION = 1
PORTFOLIO_METHODS = ("saa", "ho_fixed", "ho_crossval", "ho_gap", "wasserstein")
LOTSIZING_METHODS = ("ho_reduction", "random", "local_search")
ESTIMATED = ("ho_crossval", "ho_gap")
DEFAULT_RADII = tuple(float(r) for r in np.geomspace(1e-4, 1.0, 10))


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    n_values: tuple[int, ...]
    m_values: tuple[int, ...] = ()
    methods: tuple[str, ...] = ()
    ambiguities: tuple[str, ...] = ("mad",)
    replications: int = 25
    test_samples: int = 100_000
    seed: int = 0
    out_dir: str | None = None
    dim: int = 10
    m0: int = 25
    folds: int = 5
    radii: tuple[float, ...] = DEFAULT_RADII
    norm: str = "l2"
    parameterization: str = "variance"
    freeze_tau: bool = False
    solver_tol: float = 1e-8
    jobs: int = 1
    figures: bool = True

    def __post_init__(self):
        if self.problem not in ("portfolio", "lotsizing"):
            raise ValueError("problem must be 'portfolio' or 'lotsizing'")
        methods = self.methods or (PORTFOLIO_METHODS if self.problem == "portfolio" else LOTSIZING_METHODS)
        allowed = PORTFOLIO_METHODS if self.problem == "portfolio" else LOTSIZING_METHODS
        bad = set(methods) - set(allowed)
        if bad:
            raise ValueError(f"unknown methods for {self.problem}: {sorted(bad)}")
        if set(self.ambiguities) - {"mad", "meancov"}:
            raise ValueError("ambiguities are 'mad' and 'meancov'")
        if self.replications < 1 or self.test_samples < 1 or not self.n_values:
            raise ValueError("counts must be positive and at least one N is required")
        if self.problem == "lotsizing" and not self.m_values:
            raise ValueError("lot sizing needs reduced sizes M")
        object.__setattr__(self, "methods", tuple(methods))
        object.__setattr__(self, "n_values", tuple(sorted(int(n) for n in self.n_values)))
        object.__setattr__(self, "m_values", tuple(sorted(int(m) for m in self.m_values)))

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("out_dir")
        data.pop("jobs")
        return data


@dataclass
class ResultRecord:
    problem: str
    method: str
    ambiguity: str
    n: int
    m: int
    replication: int
    oos: float
    error: float = math.nan
    lam: float = math.nan
    constant: float = math.nan
    status: str = "optimal"
    prep_time: float = 0.0
    solve_time: float = 0.0

    @property
    def cell(self) -> tuple:
        return (self.problem, self.method, self.ambiguity, self.n, self.m)

    def numeric(self) -> dict:
        out = asdict(self)
        out.pop("prep_time")
        out.pop("solve_time")
        return out


@dataclass
class ResultTable:
    config: ExperimentConfig
    records: list[ResultRecord]
    aggregates: list[dict]
    estimation: dict = field(default_factory=dict)
    estimation_calls: int = 0

    @property
    def failures(self) -> int:
        return sum(r.status != "optimal" for r in self.records)

    def cell(self, method: str, n: int, m: int = 0, ambiguity: str | None = None) -> dict:
        for row in self.aggregates:
            if row["method"] == method and row["N"] == n and row["M"] == m and (
                    ambiguity is None or row["ambiguity"] == ambiguity):
                return row
        raise KeyError((method, n, m, ambiguity))


def derive_seed(master: int, *keys) -> int:
    """64-bit seed for one stream, from the master seed and a key path."""
    digest = hashlib.sha256(repr((int(master),) + tuple(keys)).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _settings(cfg) -> SolverSettings:
    return SolverSettings(abs_tol=cfg.solver_tol, rel_tol=cfg.solver_tol)


# ---------------------------------------------------------------------------
# portfolio
# ---------------------------------------------------------------------------


def _portfolio_instance(cfg) -> PortfolioInstance:
    return PortfolioInstance(m=cfg.dim, parameterization=cfg.parameterization)


def _portfolio_ambiguity(inst, kind):
    return inst.mad_ambiguity() if kind == "mad" else inst.moment_ambiguity()


def _train_samples(cfg, inst, n, rep):
    return generate_portfolio_samples(inst, n, derive_seed(cfg.seed, "portfolio", "train", n, rep))


def _wasserstein_radius(cfg, problem, samples) -> float:
    """Radius with the lowest K-fold validation score (train on K-1 parts)."""
    parts = fold_indices(samples.n, cfg.folds, derive_seed(cfg.seed, "wasserstein-folds", samples.n))
    scores = np.zeros(len(cfg.radii))
    settings = _settings(cfg)
    for k in range(cfg.folds):
        train = samples.subset(np.sort(np.concatenate([p for j, p in enumerate(parts) if j != k])))
        valid = samples.subset(parts[k])
        for i, r in enumerate(cfg.radii):
            prog = build_wasserstein(problem.loss, problem.space, train, r, cfg.norm)
            sol = solve(prog, settings)
            scores[i] += problem.evaluate(sol.x[prog.slice("x")], valid) if sol.ok else math.inf
    return float(cfg.radii[int(np.argmin(scores))])


def estimate_constants(cfg) -> tuple[dict, dict, int]:
    """Run each data-driven estimator once, on the smallest N of replication 0."""
    inst = _portfolio_instance(cfg)
    constants, reports, calls = {}, {}, 0
    n0 = cfg.n_values[0]
    samples = _train_samples(cfg, inst, n0, 0)
    for method in cfg.methods:
        if method not in ESTIMATED:
            continue
        for kind in cfg.ambiguities:
            problem = portfolio_problem(inst, _portfolio_ambiguity(inst, kind), _settings(cfg), cfg.freeze_tau)
            fold_seed = derive_seed(cfg.seed, "folds", method, kind)
            if method == "ho_crossval":
                report = estimate_c_crossval(problem, samples, folds=cfg.folds, seed=fold_seed)
            else:
                report = estimate_c_gap(problem, samples, folds=cfg.folds, seed=fold_seed)
            calls += 1
            constants[(method, kind)] = report.constant
            reports[f"{method}[{kind}]"] = report
    return constants, reports, calls


def _portfolio_rep(cfg, rep: int, constants: dict, prep_times: dict) -> list[ResultRecord]:
    inst = _portfolio_instance(cfg)
    test = generate_portfolio_samples(inst, cfg.test_samples, derive_seed(cfg.seed, "portfolio", "test", rep))
    settings = _settings(cfg)
    records = []
    for n in cfg.n_values:
        samples = _train_samples(cfg, inst, n, rep)
        for method in cfg.methods:
            kinds = cfg.ambiguities if method.startswith("ho") else ("none",)
            for kind in kinds:
                amb = _portfolio_ambiguity(inst, "mad" if kind == "none" else kind)
                problem = portfolio_problem(inst, amb, settings, cfg.freeze_tau)
                prep = 0.0
                constant = math.nan
                t0 = time.perf_counter()
                if method == "wasserstein":
                    constant = _wasserstein_radius(cfg, problem, samples)
                    prep = time.perf_counter() - t0
                    t0 = time.perf_counter()
                    prog = build_wasserstein(problem.loss, problem.space, samples, constant, cfg.norm)
                    sol = solve(prog, settings)
                    x = sol.x[prog.slice("x")] if sol.ok else None
                    lam = math.nan
                else:
                    if method == "saa":
                        lam = 0.0
                    else:
                        constant = estimate_c_fixed(cfg.m0) if method == "ho_fixed" else constants[(method, kind)]
                        lam = min(1.0, constant / math.sqrt(n))
                        if rep == 0 and n == cfg.n_values[0]:
                            prep = prep_times.get((method, kind), 0.0)
                    res = solve_ho(HOInstance(problem.loss, problem.space, samples, amb, lam), settings)
                    sol, x = res.solution, res.x
                solve_time = time.perf_counter() - t0
                oos = problem.evaluate(x, test) if sol.ok else math.nan
                records.append(ResultRecord("portfolio", method, kind, n, 0, rep, oos, math.nan, lam, constant,
                                            sol.status, prep, solve_time))
    return records


# ---------------------------------------------------------------------------
# lot sizing
# ---------------------------------------------------------------------------


def _lotsizing_rep(cfg, rep: int, constants: dict, prep_times: dict) -> list[ResultRecord]:
    inst = generate_lotsizing_instance(cfg.dim, derive_seed(cfg.seed, "lotsizing", "instance", rep))
    test = sample_demands(inst, cfg.test_samples, derive_seed(cfg.seed, "lotsizing", "test", rep))
    settings = _settings(cfg)
    records = []
    for n in cfg.n_values:
        full = sample_demands(inst, n, derive_seed(cfg.seed, "lotsizing", "train", n, rep))
        t0 = time.perf_counter()
        ref = lotsizing_ho_solve(inst, full, 0.0, settings=settings)
        t_ref = time.perf_counter() - t0
        opt_star = lotsizing_out_of_sample(inst, ref.x, test) if ref.solution.ok else math.nan
        records.append(ResultRecord("lotsizing", "saa_full", "none", n, n, rep, opt_star, 0.0, 0.0, math.nan,
                                    ref.solution.status, 0.0, t_ref))
        for m in cfg.m_values:
            if m > n:
                continue
            pick_seed = derive_seed(cfg.seed, "lotsizing", "reduce", n, m, rep)
            for method in cfg.methods:
                t0 = time.perf_counter()
                lam = 0.0
                kind = "none"
                if method == "ho_reduction":
                    reduced, model = ho_reduce(full, m, seed=pick_seed)
                    prep = time.perf_counter() - t0
                    t0 = time.perf_counter()
                    lam, kind = model.lam, "mad"
                    res = lotsizing_ho_solve(inst, model.samples, lam, long_worst_case(model.ambiguity), settings)
                elif method == "random":
                    reduced = random_reduce(full, m, pick_seed)
                    prep = time.perf_counter() - t0
                    t0 = time.perf_counter()
                    res = lotsizing_ho_solve(inst, reduced.as_samples(), 0.0, settings=settings)
                else:
                    reduced = local_search_reduce(full, m, 1.0, "kmeans", seed=pick_seed)
                    prep = time.perf_counter() - t0
                    t0 = time.perf_counter()
                    res = lotsizing_ho_solve(inst, reduced.as_samples(), 0.0, settings=settings)
                solve_time = time.perf_counter() - t0
                if res.solution.ok and math.isfinite(opt_star):
                    oos = lotsizing_out_of_sample(inst, res.x, test)
                    err = approximation_error(oos, opt_star)
                else:
                    oos, err = math.nan, math.nan
                records.append(ResultRecord("lotsizing", method, kind, n, m, rep, oos, err, lam, math.nan,
                                            res.solution.status, prep, solve_time))
    return records


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _run_rep(args):
    cfg, rep, constants, prep_times = args
    runner = _portfolio_rep if cfg.problem == "portfolio" else _lotsizing_rep
    return runner(cfg, rep, constants, prep_times)


def aggregate(records: list[ResultRecord], method_order) -> list[dict]:
    cells: dict[tuple, list[ResultRecord]] = {}
    for r in records:
        cells.setdefault(r.cell, []).append(r)
    rank = {m: i for i, m in enumerate(method_order)}
    rows = []
    for key in sorted(cells, key=lambda c: (c[3], c[4], rank.get(c[1], -1), c[2])):
        group = cells[key]
        good = [r for r in group if r.status == "optimal" and math.isfinite(r.oos)]
        oos = np.array([r.oos for r in good])
        err = np.array([r.error for r in good if math.isfinite(r.error)])
        lam = np.array([r.lam for r in good if math.isfinite(r.lam)])
        const = np.array([r.constant for r in good if math.isfinite(r.constant)])
        rows.append({
            "schema_version": SCHEMA_VERSION, "problem": key[0], "method": key[1], "ambiguity": key[2],
            "N": key[3], "M": key[4], "replications": len(group), "failures": len(group) - len(good),
            "oos_mean": float(oos.mean()) if oos.size else math.nan,
            "oos_std": float(oos.std(ddof=1)) if oos.size > 1 else math.nan,
            "error_mean": float(err.mean()) if err.size else math.nan,
            "error_max": float(err.max()) if err.size else math.nan,
            "lambda_mean": float(lam.mean()) if lam.size else math.nan,
            "constant_mean": float(const.mean()) if const.size else math.nan,
        })
    return rows


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    constants, reports, calls, prep_times = {}, {}, 0, {}
    if cfg.problem == "portfolio":
        constants, reports, calls = estimate_constants(cfg)
        for key, rep in reports.items():
            method, kind = key[:-1].split("[")
            prep_times[(method, kind)] = rep.wall_time
    jobs = [(cfg, rep, constants, prep_times) for rep in range(cfg.replications)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(_run_rep, jobs))
    else:
        chunks = [_run_rep(job) for job in jobs]
    records = [r for chunk in chunks for r in chunk]
    order = ("saa_full",) + cfg.methods
    table = ResultTable(cfg, records, aggregate(records, order), reports, calls)
    if cfg.out_dir:
        write_results(table, cfg.out_dir)
    return table


AGG_COLUMNS = ("schema_version", "problem", "method", "ambiguity", "N", "M", "replications", "failures",
               "oos_mean", "oos_std", "error_mean", "error_max", "lambda_mean", "constant_mean")


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else _fmt(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_results(table: ResultTable, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results.csv": out / "results.csv", "results.json": out / "results.json",
             "timings.csv": out / "timings.csv"}
    with open(paths["results.csv"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGG_COLUMNS)
        for row in table.aggregates:
            writer.writerow([_cell(row[c]) for c in AGG_COLUMNS])
    estimation = {}
    for key, rep in table.estimation.items():
        data = rep.to_dict()
        data.pop("wall_time")
        estimation[key] = data
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": table.config.to_dict(),
        "estimation_calls": table.estimation_calls,
        "estimation": estimation,
        "failures": table.failures,
        "aggregates": [{k: _jsonable(v) for k, v in row.items()} for row in table.aggregates],
        "records": [{k: _jsonable(v) for k, v in r.numeric().items()} for r in table.records],
    }
    paths["results.json"].write_text(json.dumps(payload, indent=2) + "\n")
    with open(paths["timings.csv"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["problem", "method", "ambiguity", "N", "M", "replication", "prep_time", "solve_time"])
        for r in table.records:
            writer.writerow([r.problem, r.method, r.ambiguity, r.n, r.m, r.replication,
                             f"{r.prep_time:.6f}", f"{r.solve_time:.6f}"])
        for key, rep in table.estimation.items():
            writer.writerow(["estimation", key, "", table.config.n_values[0], 0, 0, f"{rep.wall_time:.6f}", ""])
    if table.config.figures:
        from .plotting import plot_table

        for name, path in plot_table(table, out).items():
            paths[name] = path
    return paths
