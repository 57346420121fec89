"""Reference computations written against scipy directly, without the package's builders."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from harmopt.ambiguity import MadAmbiguity
from harmopt.core import AffinePiece, DecisionSpace, PiecewiseAffineLoss, SampleSet
from harmopt.reformulation import HOInstance


def random_loss(rng, m, n, k):
    pieces = tuple(AffinePiece(rng.normal(size=(m, n)), rng.normal(size=m), rng.normal(size=n), rng.normal())
                   for _ in range(k))
    return PiecewiseAffineLoss(pieces)


def random_mad_instance(rng, m_max=5, n_max=50, bounded=False, lam=0.0):
    m = int(rng.integers(1, m_max + 1))
    n_dec = int(rng.integers(1, 4))
    k = int(rng.integers(2, 4))
    n = int(rng.integers(2, n_max + 1))
    loss = random_loss(rng, m, n_dec, k)
    samples = SampleSet(rng.normal(size=(n, m)))
    mu = rng.normal(scale=0.5, size=m)
    dev = rng.uniform(0.05, 1.0, m)
    if bounded:
        lo, hi = mu - rng.uniform(0.2, 2.0, m), mu + rng.uniform(0.2, 2.0, m)
    else:
        lo, hi = np.full(m, -np.inf), np.full(m, np.inf)
    amb = MadAmbiguity(lo, mu, hi, dev)
    return HOInstance(loss, DecisionSpace.box(np.zeros(n_dec), np.ones(n_dec)), samples, amb, lam)


def box_vertices(space: DecisionSpace) -> np.ndarray:
    return np.array(list(itertools.product(*zip(space.lower, space.upper))), dtype=float)


def saa_value(instance: HOInstance) -> float:
    """min_x sum_j p_j max_k f_k(x, xi_j) as a plain epigraph LP over a box."""
    loss, S = instance.loss, instance.samples
    n, N = loss.n, S.n
    c = np.concatenate([np.zeros(n), S.weights])
    rows, rhs = [], []
    for j in range(N):
        xi = S.atoms[j]
        for k in range(loss.k):
            row = np.zeros(n + N)
            row[:n] = xi @ loss.A[k] + loss.b[k]
            row[n + j] = -1.0
            rows.append(row)
            rhs.append(-(xi @ loss.a[k] + loss.c[k]))
    bounds = list(zip(instance.space.lower, instance.space.upper)) + [(None, None)] * N
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    assert res.status == 0
    return float(res.fun)


def mad_dro_value(loss: PiecewiseAffineLoss, vertices, mean, deviation) -> float:
    """min over conv(vertices) of the worst case over laws on R^m with given mean and deviations.

    Primal side: each piece k receives mass p_k and first moment y_k, and
    y_k - p_k mu is split into positive and negative parts whose total
    is bounded by the deviation. The min over x moves inside the max (minimax),
    and a linear function over a polytope is minimized at a vertex.
    """
    K, m = loss.k, loss.m
    # variable layout: t | p (K) | y (K m) | wp (K m) | wm (K m)
    nv = 1 + K + 3 * K * m
    P = slice(1, 1 + K)
    Y = lambda k: slice(1 + K + k * m, 1 + K + (k + 1) * m)  # noqa: E731
    WP = lambda k: slice(1 + K + K * m + k * m, 1 + K + K * m + (k + 1) * m)  # noqa: E731
    WM = lambda k: slice(1 + K + 2 * K * m + k * m, 1 + K + 2 * K * m + (k + 1) * m)  # noqa: E731
    c = np.zeros(nv)
    c[0] = -1.0
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for v in np.atleast_2d(vertices):
        row = np.zeros(nv)
        row[0] = 1.0
        for k in range(K):
            row[Y(k)] = -(loss.A[k] @ v + loss.a[k])
            row[1 + k] = -(loss.b[k] @ v + loss.c[k])
        A_ub.append(row)
        b_ub.append(0.0)
    row = np.zeros(nv)
    row[P] = 1.0
    A_eq.append(row)
    b_eq.append(1.0)
    for i in range(m):
        row = np.zeros(nv)
        for k in range(K):
            row[Y(k).start + i] = 1.0
        A_eq.append(row)
        b_eq.append(mean[i])
        row = np.zeros(nv)
        for k in range(K):
            row[WP(k).start + i] = 1.0
            row[WM(k).start + i] = 1.0
        A_ub.append(row)
        b_ub.append(deviation[i])
        for k in range(K):
            row = np.zeros(nv)
            row[Y(k).start + i] = 1.0
            row[1 + k] = -mean[i]
            row[WP(k).start + i] = -1.0
            row[WM(k).start + i] = 1.0
            A_eq.append(row)
            b_eq.append(0.0)
    bounds = [(None, None)] + [(0, None)] * K + [(None, None)] * (K * m) + [(0, None)] * (2 * K * m)
    res = linprog(c, A_ub=np.array(A_ub), b_ub=np.array(b_ub), A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                  bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return float(-res.fun)


def newsvendor_optimum() -> tuple[float, float]:
    """f = max(xi - x, 2 (x - xi)), xi ~ U(0, 1): optimal order 1/3, value 1/3.

    E f(x) = (1 - x)^2 / 2 + x^2, stationary at x = 1/3.
    """
    x = 1.0 / 3.0
    return x, (1 - x) ** 2 / 2 + x ** 2
