"""Shared oracles and graph factories for the test-suite."""

import numpy as np
import scipy.sparse as sp

from wsc.graph import Dataset, make_graph


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


def matches_ptap(A1, P, A):
    """A1 == P^T A P: bitwise for integer weights, within a few ulps otherwise (summation order)."""
    ref = P.T @ A @ P
    if np.array_equal(A, np.round(A)):
        return np.array_equal(A1, ref)
    return np.allclose(A1, ref, rtol=1e-13, atol=0)


def random_adjacency(rng, m, p=0.3, weighted=False, connected=False):
    A = np.triu((rng.random((m, m)) < p).astype(float), 1)
    if connected and m > 1:
        order = rng.permutation(m)
        A[order[:-1], order[1:]] = 1.0
        A = np.triu(A + A.T, 1)
        A = (A > 0).astype(float)
    if weighted:
        A *= rng.uniform(0.5, 3.0, size=A.shape)
    return A + A.T


def random_graph(rng, m, d, label=None, **kw):
    return make_graph(random_adjacency(rng, m, **kw), rng.normal(size=(m, d)), label=label)


def toy_dataset(rng, n_graphs=12, d=3, lo=4, hi=9):
    """Two separable classes: class 1 graphs are denser and carry shifted attributes."""
    graphs = []
    for i in range(n_graphs):
        y = i % 2
        m = int(rng.integers(lo, hi))
        A = random_adjacency(rng, m, p=0.25 + 0.5 * y, connected=True)
        X = rng.normal(size=(m, d)) + 1.5 * y
        graphs.append(make_graph(A, X, label=y))
    return Dataset(graphs, 2, name="TOY", attribute_mode="label_onehot")


def permute_graph(g, perm):
    """Graph with vertex ``i`` moved to position ``inv[i]`` (new vertex j is old perm[j])."""
    A = sp.csr_matrix(g.adjacency)[perm][:, perm]
    return make_graph(A, g.attributes[perm], label=g.label)
