"""Learned graph coarsening.

A small MLP scores every vertex. The top-scoring, mutually non-adjacent
vertices become cluster seeds; every vertex is scored against every seed
by one step of normalized-adjacency propagation of the seed indicators
(weighted by ``sigmoid(score)``) and joins its best cluster. Attributes
are max-pooled per cluster and the coarse adjacency is ``P^T A P``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError, UsageError
from .nn import Linear, ReLU


def target_clusters(m: int, ratio: float) -> int:
    """Cluster count for a graph of ``m`` vertices; ratio 0 pools to one vertex."""
    if ratio == 0:
        return 1
    return int(min(m, max(1, np.floor(ratio * m + 0.5))))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class WeightMap:
    """MLP ``d -> hidden -> 1`` producing one weight per vertex."""

    def __init__(self, name, in_features, hidden, rng):
        self.in_features = in_features
        self.hidden = Linear(f"{name}.hidden", in_features, hidden, rng)
        self.relu = ReLU()
        self.out = Linear(f"{name}.out", hidden, 1, rng)

    @property
    def parameters(self):
        return self.hidden.parameters + self.out.parameters

    def forward(self, X):
        if X.shape[1] != self.in_features:
            raise UsageError(f"weight map expects width {self.in_features}, got {X.shape[1]}")
        return self.out.forward(self.relu.forward(self.hidden.forward(X)))[:, 0]

    def backward(self, d_gamma):
        return self.hidden.backward(self.relu.backward(self.out.backward(d_gamma[:, None])))


@dataclass
class CoarseningParams:
    weight_map: WeightMap | None
    ratio: float

    def __post_init__(self):
        if not 0 <= self.ratio <= 1:
            raise DomainError(f"coarsening ratio must lie in [0, 1], got {self.ratio}")


def compute_weights(params: CoarseningParams, graph) -> np.ndarray:
    X = getattr(graph, "attributes", graph)
    if params.weight_map is None:
        return np.zeros(X.shape[0])
    return params.weight_map.forward(X)


@dataclass(eq=False)
class CoarseningPlan:
    assignment: np.ndarray  # (m,) cluster of each vertex
    n_clusters: int
    seeds: np.ndarray  # (n,)
    propagation: np.ndarray  # (m, n) seed reachability before sigmoid weighting
    scores: np.ndarray  # (m, n) softmax over clusters
    coarse_adjacency: sp.csr_matrix
    coarse_attributes: np.ndarray | None = None
    winners: np.ndarray | None = None  # (n, d) vertex chosen by max-pool

    @property
    def P(self) -> sp.csr_matrix:
        m = self.assignment.size
        return sp.csr_matrix(
            (np.ones(m), (np.arange(m), self.assignment)), shape=(m, self.n_clusters)
        )

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_clusters)

    def gates(self) -> np.ndarray:
        """Per-cluster mean soft membership, scaled so uniform scores give 1."""
        own = self.scores[np.arange(self.assignment.size), self.assignment]
        return self.n_clusters * np.bincount(
            self.assignment, weights=own, minlength=self.n_clusters
        ) / self.cluster_sizes()


def coarse_adjacency(P, A):
    """``P^T A P``, averaged with its transpose so rounding cannot break symmetry."""
    B = sp.csr_matrix(P.T @ A @ P)
    return sp.csr_matrix((B + B.T) * 0.5)


def normalized_adjacency(A) -> np.ndarray:
    """Dense ``D^-1/2 (A + I) D^-1/2`` with D the row sums of ``A + I``."""
    A = A.toarray() if sp.issparse(A) else np.array(A, dtype=float)
    A[np.diag_indices_from(A)] += 1.0
    s = 1.0 / np.sqrt(A.sum(axis=1))
    return A * s[:, None] * s[None, :]


def select_seeds(weights, A, n) -> np.ndarray:
    """Top-weight vertices, skipping neighbors of seeds already chosen.

    If the non-adjacent pass yields fewer than ``n`` seeds, the remaining
    vertices are added in weight order. Ties go to the lowest index.
    """
    order = np.argsort(-weights, kind="stable")
    adjacent = (A.toarray() if sp.issparse(A) else np.asarray(A)) != 0
    blocked = np.zeros(weights.size, dtype=bool)
    seeds = []
    for v in order:
        if len(seeds) == n:
            break
        if blocked[v]:
            continue
        seeds.append(v)
        blocked[v] = True
        blocked |= adjacent[v]
    if len(seeds) < n:
        taken = set(seeds)
        seeds.extend(v for v in order if v not in taken)
        seeds = seeds[:n]
    return np.asarray(seeds, dtype=np.int64)


def segment_max(X, assignment, n_clusters):
    """Per-cluster column max and the lowest-index vertex attaining it."""
    order = np.argsort(assignment, kind="stable")
    sorted_assign = assignment[order]
    starts = np.flatnonzero(np.r_[True, sorted_assign[1:] != sorted_assign[:-1]])
    Xs = X[order]
    pooled = np.maximum.reduceat(Xs, starts, axis=0)
    hit = Xs == pooled[np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, len(order)]))]
    pos = np.where(hit, np.arange(len(order))[:, None], len(order))
    winners = order[np.minimum.reduceat(pos, starts, axis=0)]
    if len(starts) != n_clusters:
        raise DomainError("segment_max requires every cluster to be non-empty")
    return pooled, winners


def dense_blocks(batch):
    """Yield the dense adjacency block of every graph in a batch."""
    A = batch.adjacency
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    for b in range(batch.n_graphs):
        lo, hi = batch.ptr[b], batch.ptr[b + 1]
        s, e = A.indptr[lo], A.indptr[hi]
        block = np.zeros((hi - lo, hi - lo))
        block[rows[s:e] - lo, A.indices[s:e] - lo] = A.data[s:e]
        yield block


def cluster(weights, adjacency, n, attributes=None, coarse=True) -> CoarseningPlan:
    """Assign every vertex to one of ``n`` clusters and build the coarse graph."""
    weights = np.asarray(weights, dtype=float)
    A = adjacency.toarray() if sp.issparse(adjacency) else np.asarray(adjacency, dtype=float)
    m = A.shape[0]
    if not 1 <= n <= m:
        raise DomainError(f"cluster count {n} outside 1..{m}")

    seeds = select_seeds(weights, A, n)
    A_hat = normalized_adjacency(A)
    M = A_hat[:, seeds]
    unreached = ~M.any(axis=1)
    reach = M
    steps = 1
    while unreached.any() and steps < m:
        reach = A_hat @ reach
        M[unreached] = reach[unreached]
        unreached = ~M.any(axis=1)
        steps += 1

    H = M * _sigmoid(weights[seeds])
    scores = np.exp(H - H.max(axis=1, keepdims=True))
    scores /= scores.sum(axis=1, keepdims=True)
    assignment = np.argmax(H, axis=1)

    sizes = np.bincount(assignment, minlength=n)
    for j in np.flatnonzero(sizes == 0):
        movable = sizes[assignment] > 1
        margin = scores[:, j] - scores[np.arange(m), assignment]
        margin[~movable] = -np.inf
        v = int(np.argmax(margin))
        sizes[assignment[v]] -= 1
        assignment[v] = j
        sizes[j] += 1

    plan = CoarseningPlan(assignment, n, seeds, M, scores, None)
    if coarse:
        P = plan.P
        plan.coarse_adjacency = coarse_adjacency(P, sp.csr_matrix(A))
    if attributes is not None:
        plan.coarse_attributes, plan.winners = segment_max(
            np.asarray(attributes, dtype=float), assignment, n
        )
    return plan


def pool_backward(plan: CoarseningPlan, upstream, n_vertices=None):
    """Route max-pool gradients to the winning vertices."""
    if plan.winners is None:
        raise UsageError("plan has no cached max-pool winners")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != plan.winners.shape:
        raise UsageError("upstream shape does not match the cached plan")
    m = plan.assignment.size if n_vertices is None else n_vertices
    dX = np.zeros((m, upstream.shape[1]))
    cols = np.broadcast_to(np.arange(upstream.shape[1]), upstream.shape)
    np.add.at(dX, (plan.winners, cols), upstream)
    return dX


def gate_backward(plan: CoarseningPlan, weights, d_gates):
    """Gradient of the cluster gates w.r.t. the vertex weights."""
    m, n = plan.scores.shape
    idx = np.arange(m)
    dS = np.zeros((m, n))
    dS[idx, plan.assignment] = (d_gates * n / plan.cluster_sizes())[plan.assignment]
    S = plan.scores
    dH = S * (dS - np.sum(dS * S, axis=1, keepdims=True))
    sig = _sigmoid(weights[plan.seeds])
    d_sig = np.sum(dH * plan.propagation, axis=0)
    d_weights = np.zeros(m)
    np.add.at(d_weights, plan.seeds, d_sig * sig * (1.0 - sig))
    return d_weights


class CoarseningLayer:
    """Batched coarsening with gated max-pooling.

    Pooled attributes of cluster j are multiplied by the gate of
    :meth:`CoarseningPlan.gates`, which carries gradient back to the weight
    map. Pooling to a single vertex has a constant gate of 1 and no weight map.
    """

    def __init__(self, name, in_features, ratio, rng, hidden=16):
        self.name = name
        self.ratio = ratio
        wm = None if ratio == 0 else WeightMap(f"{name}.phi", in_features, hidden, rng)
        self.params = CoarseningParams(wm, ratio)
        self._cache = None

    @property
    def parameters(self):
        wm = self.params.weight_map
        return [] if wm is None else wm.parameters

    def forward(self, batch):
        from .batch import GraphBatch

        X = batch.attributes
        if self.params.weight_map is None:
            gamma = None
            plans = []
            assignment = batch.graph_index
            offsets = np.arange(batch.n_graphs + 1)
            gates = np.ones(batch.n_graphs)
        else:
            gamma = compute_weights(self.params, X)
            plans, offsets = [], [0]
            assignment = np.empty(batch.vertex_count, dtype=np.int64)
            for b, A_b in enumerate(dense_blocks(batch)):
                lo, hi = batch.ptr[b], batch.ptr[b + 1]
                n = target_clusters(hi - lo, self.ratio)
                plan = cluster(gamma[lo:hi], A_b, n, coarse=False)
                plans.append(plan)
                assignment[lo:hi] = plan.assignment + offsets[-1]
                offsets.append(offsets[-1] + n)
            gates = np.concatenate([p.gates() for p in plans])
        total = offsets[-1]
        pooled, winners = segment_max(X, assignment, total)
        P = sp.csr_matrix(
            (np.ones(batch.vertex_count), (np.arange(batch.vertex_count), assignment)),
            shape=(batch.vertex_count, total),
        )
        A1 = coarse_adjacency(P, batch.adjacency)
        A1.sort_indices()
        self._cache = (batch, gamma, plans, np.asarray(offsets), pooled, winners, gates)
        return GraphBatch(A1, pooled * gates[:, None], np.asarray(offsets))

    def backward(self, upstream):
        if self._cache is None:
            raise UsageError(f"{self.name}: backward called before forward")
        batch, gamma, plans, offsets, pooled, winners, gates = self._cache
        if upstream.shape != pooled.shape:
            raise UsageError(f"{self.name}: upstream shape does not match cache")
        N, d = batch.attributes.shape
        dX = np.zeros((N, d))
        cols = np.broadcast_to(np.arange(d), winners.shape)
        np.add.at(dX, (winners, cols), upstream * gates[:, None])
        wm = self.params.weight_map
        if wm is not None:
            d_gates = np.sum(upstream * pooled, axis=1)
            d_gamma = np.empty(N)
            for b, plan in enumerate(plans):
                lo, hi = batch.ptr[b], batch.ptr[b + 1]
                d_gamma[lo:hi] = gate_backward(
                    plan, gamma[lo:hi], d_gates[offsets[b]:offsets[b + 1]]
                )
            dX += wm.backward(d_gamma)
        return dX
