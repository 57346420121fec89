import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from harmopt.solver import (ConicProgram, ProgramBuilder, Solution, SolverSettings, smat, solve, svec,
                            svec_size, verify_solution)


def test_lower_bound_lp():
    bld = ProgramBuilder()
    x = bld.var("x", 1)
    bld.minimize(x, 1.0)
    bld.geq([(x, 1.0)], 1.0)
    sol = solve(bld.build())
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-8) and sol.objective == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("backend", ["highs", "clarabel"])
def test_infeasible(backend):
    bld = ProgramBuilder()
    x = bld.var("x", 1)
    bld.geq([(x, 1.0)], 1.0)
    bld.leq([(x, 1.0)], 0.0)
    sol = solve(bld.build(), SolverSettings(backend=backend))
    assert sol.status == "infeasible" and not sol.ok


def test_unbounded():
    bld = ProgramBuilder()
    x = bld.var("x", 1)
    bld.minimize(x, 1.0)
    bld.leq([(x, 1.0)], 0.0)
    assert solve(bld.build()).status == "unbounded"


def test_soc_ball():
    bld = ProgramBuilder()
    x = bld.var("x", 2)
    bld.minimize(x, [1.0, 0.0])
    # (1, x) in the second-order cone
    bld.soc([(x, np.vstack([np.zeros((1, 2)), np.eye(2)]))], [-1.0, 0.0, 0.0])
    sol = solve(bld.build())
    assert sol.ok and sol.objective == pytest.approx(-1.0, abs=1e-7)
    assert verify_solution(bld.build(), sol).ok


def test_psd_min_eigenvalue():
    # min t s.t. t I - M >= 0 gives the largest eigenvalue of M
    rng = np.random.default_rng(2)
    B = rng.normal(size=(3, 3))
    M = B + B.T
    bld = ProgramBuilder()
    t = bld.var("t", 1)
    bld.minimize(t, 1.0)
    bld.psd([(t, svec(np.eye(3))[:, None])], svec(M), 3)
    sol = solve(bld.build())
    assert sol.ok
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(M)[-1], abs=1e-6)


def test_svec_round_trip_and_inner_product():
    rng = np.random.default_rng(0)
    for d in (1, 2, 4):
        A = rng.normal(size=(d, d))
        A = A + A.T
        B = rng.normal(size=(d, d))
        B = B + B.T
        assert svec(A).size == svec_size(d)
        assert np.allclose(smat(svec(A)), A)
        assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B))


def test_violation_report_examples():
    bld = ProgramBuilder()
    x = bld.var("x", 1)
    bld.minimize(x, 1.0)
    bld.geq([(x, 1.0)], 1.0, "lb")
    prog = bld.build()
    sol = solve(prog)
    assert verify_solution(prog, sol).max_violation <= 1e-6
    shifted = Solution("optimal", sol.x - 1e-3, sol.objective)
    assert verify_solution(prog, shifted).max_violation == pytest.approx(1e-3, rel=1e-6)
    empty = ProgramBuilder()
    empty.var("y", 1)
    report = verify_solution(empty.build(), Solution("optimal", np.zeros(1), 0.0))
    assert report.blocks == [] and report.max_violation == 0.0


def test_program_json_round_trip():
    bld = ProgramBuilder()
    x = bld.var("x", 2)
    bld.minimize(x, [1.0, 2.0])
    bld.geq([(x, np.eye(2))], [0.5, -1.0])
    bld.soc([(x, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))], [-3.0, 0.0, 0.0])
    prog = bld.build()
    back = ConicProgram.from_json(prog.to_json())
    assert solve(back).objective == pytest.approx(solve(prog).objective, abs=1e-8)


def test_malformed_term_rejected():
    bld = ProgramBuilder()
    x = bld.var("x", 2)
    with pytest.raises(ValueError):
        bld.geq([(x, np.ones((3, 3)))], [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        bld.var("x", 1)


def test_lp_routed_to_conic_backend_agrees():
    rng = np.random.default_rng(7)
    G = rng.normal(size=(6, 3))
    h = G @ rng.normal(size=3) - rng.uniform(0.1, 1, 6)
    c = G.T @ rng.uniform(0.1, 1, 6)
    bld = ProgramBuilder()
    x = bld.var("x", 3)
    bld.minimize(x, c)
    bld.geq([(x, G)], h)
    prog = bld.build()
    a = solve(prog, SolverSettings(backend="highs"))
    b = solve(prog, SolverSettings(backend="clarabel"))
    assert a.ok and b.ok and a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_lps_match_scipy(seed):
    # independent oracle: scipy's interior-point HiGHS variant on the raw data
    rng = np.random.default_rng(seed)
    n, m = 4, 7
    G = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    h = G @ x0 - rng.uniform(0.0, 1.0, m)
    c = G.T @ rng.uniform(0.1, 1.0, m)
    bld = ProgramBuilder()
    x = bld.var("x", n)
    bld.minimize(x, c)
    bld.geq([(x, G)], h)
    ours = solve(bld.build())
    ref = linprog(c, A_ub=-G, b_ub=-h, bounds=[(None, None)] * n, method="highs-ipm")
    assert ours.ok and ref.status == 0
    assert ours.objective == pytest.approx(ref.fun, rel=1e-6, abs=1e-7)
