"""Command line entry point: ``harmopt solve | estimate | reduce | bench``.

Exit codes: 0 on success, 1 for bad input or usage, 2 when a solve or any
benchmark cell fails.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from ..core import SampleSet, _fmt, read_json, write_json
from ..problems.portfolio import PortfolioInstance, generate_portfolio_samples, portfolio_problem
from ..reformulation import HOInstance, solve_ho
from ..scenred import ho_reduce, local_search_reduce, random_reduce
from ..solver import SolverSettings
from ..weights import estimate_c_crossval, estimate_c_fixed, estimate_c_gap
from .experiments import LOTSIZING_METHODS, PORTFOLIO_METHODS, ExperimentConfig, run_experiment


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return vals


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _settings(args) -> SolverSettings:
    return SolverSettings(abs_tol=args.solver_tol, rel_tol=args.solver_tol)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    try:
        inst = HOInstance.from_dict(read_json(args.instance))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise InputError(f"cannot read instance: {exc}") from exc
    if args.lam is not None:
        inst = inst.with_lam(args.lam)
    options = {"use_support": True} if args.use_support else {}
    res = solve_ho(inst, _settings(args), **options)
    payload = {"status": res.solution.status, "lambda": inst.lam,
               "objective": res.value if res.solution.ok else None,
               "x": None if res.x is None else res.x.tolist(), "backend": res.solution.backend}
    write_json(_out(args) / "solution.json", payload)
    print(f"status {res.solution.status}")
    if not res.solution.ok:
        return 2
    print(f"objective {_fmt(res.value)}")
    print("x " + " ".join(_fmt(v) for v in res.x))
    return 0


def cmd_estimate(args) -> int:
    inst = PortfolioInstance(m=args.dim, parameterization=args.parameterization)
    if args.samples:
        samples = SampleSet.from_csv(args.samples)
        if samples.m != inst.m:
            raise InputError(f"samples have {samples.m} columns, expected {inst.m}")
    else:
        samples = generate_portfolio_samples(inst, args.n, args.seed)
    amb = inst.mad_ambiguity() if args.ambiguity == "mad" else inst.moment_ambiguity()
    problem = portfolio_problem(inst, amb, _settings(args))
    if args.method == "fixed":
        payload = {"method": "fixed", "C": estimate_c_fixed(args.m0), "M0": args.m0}
    elif args.method == "crossval":
        payload = estimate_c_crossval(problem, samples, folds=args.folds, seed=args.seed).to_dict()
    else:
        payload = estimate_c_gap(problem, samples, folds=args.folds, seed=args.seed).to_dict()
    payload["lambda"] = min(1.0, payload["C"] / math.sqrt(samples.n))
    write_json(_out(args) / "estimate.json", payload)
    print(f"C {_fmt(payload['C'])}")
    print(f"lambda {_fmt(payload['lambda'])}")
    return 0


def cmd_reduce(args) -> int:
    try:
        P = SampleSet.from_csv(args.samples)
    except (OSError, ValueError, IndexError) as exc:
        raise InputError(f"cannot read samples: {exc}") from exc
    if not 1 <= args.size <= P.n:
        raise InputError(f"reduced size must lie in [1, {P.n}]")
    out = _out(args)
    extra = {}
    if args.method == "ho":
        reduced, model = ho_reduce(P, args.size, seed=args.seed)
        extra = {"lambda": model.lam, "ambiguity": model.ambiguity.to_dict()}
    elif args.method == "random":
        reduced = random_reduce(P, args.size, args.seed)
    else:
        if args.size >= P.n:
            raise InputError("local search needs a reduced size below N")
        reduced = local_search_reduce(P, args.size, args.l, args.init, seed=args.seed)
    reduced.to_csv(out / "reduced.csv")
    write_json(out / "reduced.json", {**reduced.to_dict(), **extra})
    print(f"method {reduced.method} size {reduced.size}")
    if "lambda" in extra:
        print(f"lambda {_fmt(extra['lambda'])}")
    elif reduced.method == "local_search":
        print(f"distance {_fmt(reduced.value)}")
    return 0


def cmd_bench(args) -> int:
    try:
        cfg = ExperimentConfig(
            problem=args.problem, n_values=args.n_values, m_values=args.m_values or (),
            methods=args.methods or (), ambiguities=args.ambiguities, replications=args.reps,
            test_samples=args.test_samples, seed=args.seed, out_dir=args.out, dim=args.dim, m0=args.m0,
            folds=args.folds, norm=args.norm, parameterization=args.parameterization,
            freeze_tau=args.freeze_tau, solver_tol=args.solver_tol, jobs=args.jobs, figures=not args.no_figures)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    table = run_experiment(cfg)
    for row in table.aggregates:
        label = row["method"] if row["ambiguity"] == "none" else f"{row['method']}[{row['ambiguity']}]"
        size = f" M={row['M']}" if cfg.problem == "lotsizing" else ""
        err = "" if math.isnan(row["error_mean"]) else f" error={row['error_mean']:.4g}%"
        print(f"N={row['N']}{size} {label} oos={row['oos_mean']:.8g}{err} failures={row['failures']}")
    print(f"results written to {Path(args.out) / 'results.csv'}")
    return 2 if table.failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="harmopt", description="Blended sample/worst-case optimization toolkit.")
    # global flags may go before or after the subcommand; only the top level
    # carries defaults so a later level never overwrites an earlier value
    common = _Parser(add_help=False)
    for level, suppress in ((parser, False), (common, True)):
        default = (lambda v: argparse.SUPPRESS if suppress else v)
        level.add_argument("--seed", type=int, default=default(0), help="master random seed")
        level.add_argument("--out", default=default("out"), help="output directory")
        level.add_argument("--test-samples", type=int, default=default(100_000),
                           help="out-of-sample test set size")
        level.add_argument("--solver-tol", type=float, default=default(1e-8),
                           help="solver absolute/relative tolerance")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="solve one instance given as JSON")
    p.add_argument("instance", help="instance JSON (loss, space, samples, ambiguity, lambda)")
    p.add_argument("--lambda", dest="lam", type=float, help="override the blend weight")
    p.add_argument("--use-support", action="store_true", help="keep the support box in the MAD dual")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("estimate", parents=[common], help="estimate C for the portfolio problem")
    p.add_argument("--method", choices=("crossval", "gap", "fixed"), default="crossval")
    p.add_argument("--samples", help="CSV of training samples (default: draw --n samples)")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--m0", type=int, default=25)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--ambiguity", choices=("mad", "meancov"), default="mad")
    p.add_argument("--parameterization", choices=("variance", "stddev"), default="variance")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("reduce", parents=[common], help="reduce a scenario CSV to M atoms")
    p.add_argument("samples", help="CSV with columns x1..xm and an optional weight column")
    p.add_argument("--size", type=int, required=True, help="reduced size M")
    p.add_argument("--method", choices=("ho", "random", "local_search"), default="ho")
    p.add_argument("--l", type=float, default=1.0, help="transport cost exponent")
    p.add_argument("--init", choices=("kmeans", "random"), default="kmeans")
    p.set_defaults(func=cmd_reduce)

    bench = sub.add_parser("bench", help="run a benchmark grid")
    bsub = bench.add_subparsers(dest="problem", required=True, parser_class=_Parser)
    for name, methods, n_default in (("portfolio", PORTFOLIO_METHODS, (25, 50, 100, 200)),
                                     ("lotsizing", LOTSIZING_METHODS, (100,))):
        b = bsub.add_parser(name, parents=[common], help=f"{name} benchmark")
        b.add_argument("--n-values", type=_ints, default=n_default)
        b.add_argument("--m-values", type=_ints, default=(10, 20, 30) if name == "lotsizing" else None)
        b.add_argument("--methods", type=_names, default=None, help=f"subset of {','.join(methods)}")
        b.add_argument("--ambiguities", type=_names, default=("mad",), help="mad and/or meancov")
        b.add_argument("--reps", type=int, default=25)
        b.add_argument("--dim", type=int, default=10)
        b.add_argument("--m0", type=int, default=25)
        b.add_argument("--folds", type=int, default=5)
        b.add_argument("--norm", choices=("l1", "l2", "linf"), default="l2")
        b.add_argument("--parameterization", choices=("variance", "stddev"), default="variance")
        b.add_argument("--freeze-tau", action="store_true")
        b.add_argument("--jobs", type=int, default=1)
        b.add_argument("--no-figures", action="store_true")
        b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"harmopt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
