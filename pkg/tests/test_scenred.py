import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from harmopt.ambiguity import MadAmbiguity
from harmopt.core import SampleSet, sample_moments
from harmopt.scenred import (ReducedScenarioSet, closest_fixed_support_distance, exhaustive_reduce, ho_reduce,
                             local_search_reduce, random_reduce, recover_probabilities, wasserstein_type_l)


def line(*pts):
    return SampleSet(np.array(pts, float)[:, None])


def test_wasserstein_examples():
    P = line(0, 2)
    assert wasserstein_type_l(P, P) == pytest.approx(0.0, abs=1e-9)
    assert wasserstein_type_l(P, line(1)) == pytest.approx(1.0)
    assert wasserstein_type_l(P, line(1), 2) == pytest.approx(1.0)


def test_wasserstein_uniform_equal_size_is_assignment():
    # independent oracle: with equal uniform weights an optimal plan is a permutation
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    cost = np.linalg.norm(X[:, None] - Y[None], axis=2)
    r, c = linear_sum_assignment(cost)
    assert wasserstein_type_l(SampleSet(X), SampleSet(Y)) == pytest.approx(cost[r, c].mean(), rel=1e-8)


def test_fixed_support_examples():
    P = line(0, 2)
    d, w = closest_fixed_support_distance(P, [0])
    assert d == pytest.approx(1.0) and np.allclose(w, [1.0])
    d, w = closest_fixed_support_distance(line(0, 1, 10), [1, 2])
    assert d == pytest.approx(1 / 3) and np.allclose(w, [2 / 3, 1 / 3])
    d, w = closest_fixed_support_distance(line(0, 1, 10), [0, 1, 2])
    assert d == pytest.approx(0.0) and np.allclose(w, 1 / 3)


def test_recover_probabilities_tie_goes_to_lower_index():
    P = line(0, 1, 2)
    assert np.allclose(recover_probabilities(P, [0, 2]), [2 / 3, 1 / 3])
    assert np.allclose(recover_probabilities(P, [2, 0]), [2 / 3, 1 / 3])


def test_fixed_support_matches_transport_lp():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(3, 31))
        P = SampleSet(rng.normal(size=(n, 2)), rng.dirichlet(np.ones(n)))
        support = np.sort(rng.choice(n, int(rng.integers(1, n)), replace=False))
        for l in (1.0, 2.0):
            d, w = closest_fixed_support_distance(P, support, l)
            Q = SampleSet(P.atoms[support], w)
            assert d == pytest.approx(wasserstein_type_l(P, Q, l), abs=1e-8)


def test_local_search_examples():
    P = line(0, 1, 10)
    red = local_search_reduce(P, 2)
    assert red.value == pytest.approx(1 / 3)
    assert red.value == pytest.approx(exhaustive_reduce(P, 2).value)
    # N - 1 on distinct atoms drops the cheapest one
    P = line(0, 1, 3, 7)
    costs = [exhaustive_reduce(P, 3).value]
    removal = min(closest_fixed_support_distance(P, [j for j in range(4) if j != i])[0] for i in range(4))
    assert local_search_reduce(P, 3).value == pytest.approx(removal) == pytest.approx(costs[0])


def test_local_search_fixed_point():
    P = line(0, 1, 10)
    opt = exhaustive_reduce(P, 2)
    red = local_search_reduce(P, 2, init="given", given=opt.indices)
    assert len(red.trace) == 1 and np.array_equal(red.indices, opt.indices)


def test_local_search_argument_checks():
    P = line(0, 1, 2)
    with pytest.raises(ValueError):
        local_search_reduce(P, 3)
    with pytest.raises(ValueError):
        local_search_reduce(P, 2, init="given", given=[0, 0])


def test_local_search_beats_random_mostly():
    rng = np.random.default_rng(2)
    P = SampleSet(rng.normal(size=(40, 3)))
    wins = 0
    for seed in range(20):
        ls = local_search_reduce(P, 5, seed=seed)
        rd = random_reduce(P, 5, seed=seed)
        wins += ls.value <= wasserstein_type_l(P, rd.as_samples()) + 1e-12
    assert wins >= 18


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(4, 9), st.integers(1, 3))
def test_local_search_trace_and_bound(seed, n, m):
    rng = np.random.default_rng(seed)
    P = SampleSet(rng.normal(size=(n, 2)))
    red = local_search_reduce(P, m, seed=seed)
    assert all(b < a for a, b in zip(red.trace, red.trace[1:]))
    assert red.value >= exhaustive_reduce(P, m).value - 1e-12
    assert np.all(red.probs > 0) and red.probs.sum() == pytest.approx(1.0)


def test_random_reduce_examples():
    P = line(*range(6))
    full = random_reduce(P, 6, seed=3)
    assert sorted(full.indices.tolist()) == list(range(6)) and np.allclose(full.probs, 1 / 6)
    assert np.array_equal(random_reduce(P, 3, seed=4).indices, random_reduce(P, 3, seed=4).indices)
    one = random_reduce(P, 1, seed=5)
    assert one.size == 1 and one.probs[0] == 1.0


def test_ho_reduce_examples():
    rng = np.random.default_rng(6)
    P = SampleSet(rng.uniform(0, 5, size=(16, 2)))
    red, model = ho_reduce(P, 16, seed=0)
    assert model.lam == 0.0 and red.size == 16
    red, model = ho_reduce(P, 1, seed=0)
    assert model.lam == pytest.approx(1 - 1 / 4) and model.samples.n == 1
    mom = sample_moments(P)
    assert isinstance(model.ambiguity, MadAmbiguity)
    assert np.allclose(model.ambiguity.mean, mom.mean) and np.allclose(model.ambiguity.deviation, mom.mad)
    assert np.allclose(model.ambiguity.lower, P.atoms.min(0)) and np.allclose(model.ambiguity.upper, P.atoms.max(0))


def test_reduced_csv_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    P = SampleSet(rng.normal(size=(12, 2)))
    red = local_search_reduce(P, 4)
    red.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "index,x1,x2,omega"
    back = ReducedScenarioSet.from_csv(tmp_path / "r.csv")
    assert np.array_equal(back.indices, red.indices) and np.array_equal(back.probs, red.probs)
    assert np.array_equal(back.atoms, red.atoms)


def test_exhaustive_agrees_with_enumeration():
    rng = np.random.default_rng(8)
    P = SampleSet(rng.normal(size=(7, 2)))
    best = min(closest_fixed_support_distance(P, list(c))[0] for c in itertools.combinations(range(7), 3))
    assert exhaustive_reduce(P, 3).value == pytest.approx(best)
