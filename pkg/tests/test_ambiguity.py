import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmopt.ambiguity import (ConfidenceSet, GenericConicAmbiguity, MadAmbiguity, MixtureAmbiguity,
                               MomentAmbiguity, ambiguity_from_dict, gelbrich_distance, mad_as_generic,
                               mad_worst_case_marginal, membership_check, mix_pairs, mixture_moments,
                               psd_sqrt)
from harmopt.core import MeanCovPair, SampleSet


def test_three_point_examples():
    law = mad_worst_case_marginal(-1.0, 0.0, 1.0, 0.5)
    assert np.allclose(law.atoms, [-1, 0, 1]) and np.allclose(law.probs, [0.25, 0.5, 0.25])
    point = mad_worst_case_marginal(-1.0, 0.0, 1.0, 0.0)
    assert np.allclose(point.probs, [0, 1, 0])
    law = mad_worst_case_marginal(200.0, 300.0, 500.0, 80.0)
    assert np.allclose(law.probs, [0.4, 0.4, 0.2])
    with pytest.raises(ValueError):
        mad_worst_case_marginal(-1.0, 0.0, 1.0, -0.1)


def test_three_point_clips_large_deviation():
    law = mad_worst_case_marginal(0.0, 1.0, 4.0, 10.0)
    # clipped deviation 2*1*3/4 = 1.5 puts all mass on the endpoints
    assert np.allclose(law.probs, [0.75, 0.0, 0.25])


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0, 20))
def test_three_point_moments(mu, left, right, dev):
    lo, hi = mu - left, mu + right
    law = mad_worst_case_marginal(lo, mu, hi, dev)
    assert np.all(law.probs >= -1e-15) and law.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert law.probs @ law.atoms == pytest.approx(mu, abs=1e-9)
    expected = min(dev, 2 * left * right / (left + right))
    assert law.probs @ np.abs(law.atoms - mu) == pytest.approx(expected, abs=1e-9)
    amb = MadAmbiguity(lo, mu, hi, dev)
    assert amb.clipped_deviation()[0] == pytest.approx(expected, abs=1e-12)


def test_gelbrich_examples():
    a = MeanCovPair([0.0], [[1.0]])
    assert gelbrich_distance(a, a) == 0.0
    assert gelbrich_distance(a, MeanCovPair([1.0], [[1.0]])) == pytest.approx(1.0)
    assert gelbrich_distance(MeanCovPair([0.0], [[4.0]]), a) == pytest.approx(1.0)


def test_gelbrich_commuting_closed_form():
    # for diagonal covariances the trace term is sum (sqrt(a) - sqrt(b))^2
    rng = np.random.default_rng(1)
    a, b = rng.uniform(0.1, 3, 4), rng.uniform(0.1, 3, 4)
    m1, m2 = rng.normal(size=4), rng.normal(size=4)
    expected = np.sqrt(np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(a) - np.sqrt(b)) ** 2))
    got = gelbrich_distance(MeanCovPair(m1, np.diag(a)), MeanCovPair(m2, np.diag(b)))
    assert got == pytest.approx(expected, rel=1e-10)


def test_gelbrich_rejects_non_psd():
    with pytest.raises(ValueError):
        gelbrich_distance(MeanCovPair([0.0], [[-1.0]]), MeanCovPair([0.0], [[1.0]]))


def test_psd_sqrt_squares_back():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(4, 4))
    S = B @ B.T
    R = psd_sqrt(S)
    assert np.allclose(R @ R, S, atol=1e-10) and np.allclose(R, R.T)


def test_mixture_examples():
    base = MeanCovPair([0.0], [[1.0]])
    info = MeanCovPair([2.0], [[1.0]])
    assert np.allclose(mix_pairs(base, info, 0.0).covariance, base.covariance)
    one = mix_pairs(base, info, 1.0)
    assert np.allclose(one.mean, info.mean) and np.allclose(one.covariance, info.covariance)
    half = mix_pairs(base, info, 0.5)
    assert half.mean[0] == pytest.approx(1.0) and half.covariance[0, 0] == pytest.approx(2.0)


def test_mixture_moments_match_sampling():
    # independent route: moments of an explicit mixture sample set
    rng = np.random.default_rng(5)
    emp = SampleSet(rng.normal(size=(6, 2)))
    info_atoms = rng.normal(loc=3.0, size=(4, 2))
    info = SampleSet(info_atoms)
    lam = 0.3
    mixed = SampleSet(np.vstack([emp.atoms, info_atoms]),
                      np.concatenate([(1 - lam) * emp.weights, lam * info.weights]))
    direct = MeanCovPair.of(mixed)
    got = mixture_moments(MixtureAmbiguity(emp, None, lam), MeanCovPair.of(info))
    assert np.allclose(got.mean, direct.mean) and np.allclose(got.covariance, direct.covariance)


def test_membership_examples():
    amb = MadAmbiguity(-1.0, 0.0, 1.0, 0.5)
    law = mad_worst_case_marginal(-1.0, 0.0, 1.0, 0.5)
    assert membership_check(SampleSet(law.atoms[:, None], law.probs), amb)
    pinned = MadAmbiguity(-1.0, 0.0, 1.0, 0.0)
    rep = membership_check(SampleSet([[0.2]]), pinned)
    assert not rep and rep.violations["mean"] == pytest.approx(0.2)
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    mc = MomentAmbiguity([0.0, 0.0], cov, gamma1=0.0, gamma2=1.0)
    L = np.linalg.cholesky(cov)
    shift = 0.1 * L @ np.array([1.0, 0.0])
    pts = np.array([shift + L @ np.array([s, 0.0]) * 0.5 for s in (-1, 1)])
    rep = membership_check(SampleSet(pts), mc)
    assert not rep and rep.violations["ellipsoid"] == pytest.approx(0.01, rel=1e-9)


def test_mad_validation():
    with pytest.raises(ValueError):
        MadAmbiguity(1.0, 0.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        MadAmbiguity(-1.0, 0.0, 1.0, -0.5)
    with pytest.raises(ValueError):
        MomentAmbiguity([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]])


def test_mad_from_samples_uses_sample_statistics():
    rng = np.random.default_rng(9)
    X = rng.uniform(-2, 3, size=(40, 3))
    amb = MadAmbiguity.from_samples(SampleSet(X))
    assert np.allclose(amb.mean, X.mean(0))
    assert np.allclose(amb.deviation, np.abs(X - X.mean(0)).mean(0))
    assert np.allclose(amb.lower, X.min(0)) and np.allclose(amb.upper, X.max(0))


def test_generic_ancestors_nested_boxes():
    eye = np.eye(1)
    inner = ConfidenceSet(np.vstack([eye, -eye]), np.zeros((2, 1)), [1.0, 1.0], p_lower=0.5, p_upper=1.0)
    outer = ConfidenceSet(np.vstack([eye, -eye]), np.zeros((2, 1)), [3.0, 3.0])
    amb = GenericConicAmbiguity(np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0), (inner, outer))
    assert 1 in amb.ancestors[0] and 0 not in amb.ancestors[1]
    assert 0 in amb.ancestors[0]


def test_generic_rejects_overlapping_sets():
    eye = np.eye(1)
    a = ConfidenceSet(np.vstack([eye, -eye]), np.zeros((2, 1)), [1.0, 0.0])
    b = ConfidenceSet(np.vstack([eye, -eye]), np.zeros((2, 1)), [2.0, -0.5])
    with pytest.raises(ValueError):
        GenericConicAmbiguity(np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0), (a, b))


def test_mad_as_generic_shapes():
    amb = MadAmbiguity([-1.0, -2.0], [0.0, 0.5], [1.0, 2.0], [0.3, 0.4])
    gen = mad_as_generic(amb, use_support=True)
    assert gen.m == 2 and gen.h == 2 and gen.A.shape == (4, 2) and gen.sets[0].C.shape[0] == 8


def test_serialization_round_trip():
    for amb in (MadAmbiguity([-1.0, -np.inf], [0.0, 0.0], [1.0, np.inf], [0.2, 0.4]),
                MomentAmbiguity([0.0, 1.0], [[1.0, 0.2], [0.2, 2.0]], 0.5, 1.5),
                mad_as_generic(MadAmbiguity(-1.0, 0.0, 1.0, 0.5), use_support=True)):
        back = ambiguity_from_dict(amb.to_dict())
        assert back.to_dict() == amb.to_dict()


def test_gelbrich_near_equal_rank_deficient():
    # the trace formula cancels here; the distance of a pair to itself must stay at rounding level
    rng = np.random.default_rng(11)
    for _ in range(200):
        B = rng.normal(size=(6, 2)) * 10
        a = MeanCovPair(rng.normal(size=6), B @ B.T)
        assert gelbrich_distance(a, a) <= 1e-9


def test_three_point_full_clipping_nonnegative():
    rng = np.random.default_rng(12)
    for _ in range(500):
        mu = rng.uniform(-1, 1)
        lo, hi = mu - rng.uniform(0.1, 2), mu + rng.uniform(0.1, 2)
        law = mad_worst_case_marginal(lo, mu, hi, 10.0)
        assert np.all(law.probs >= 0.0) and law.probs[1] == pytest.approx(0.0, abs=1e-15)
