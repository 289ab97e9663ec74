"""Random-walk transition structure and multi-scale walk fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-normalized adjacency ``D^-1 A``.

    Rows of isolated vertices are empty; ``isolated`` flags them.
    """

    row_normalized: sp.csr_matrix
    degree: np.ndarray
    isolated: np.ndarray
    _keys: np.ndarray

    @property
    def vertex_count(self) -> int:
        return self.row_normalized.shape[0]

    def step(self, current: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Advance every walker in ``current`` by one step.

        ``uniforms`` are draws in [0, 1). Each walker picks the first
        neighbor whose cumulative row probability exceeds its draw;
        isolated vertices stay put.
        """
        P = self.row_normalized
        pos = np.searchsorted(self._keys, current + uniforms, side="right")
        # clamp guards against rounding at the row boundary
        pos = np.clip(pos, P.indptr[current], np.maximum(P.indptr[current + 1] - 1, 0))
        nxt = P.indices[np.minimum(pos, max(P.nnz - 1, 0))] if P.nnz else current
        return np.where(self.isolated[current], current, nxt)


def build_transition(adjacency) -> TransitionMatrix:
    """Build the transition matrix of a graph or adjacency matrix."""
    A = getattr(adjacency, "adjacency", adjacency)
    A = sp.csr_matrix(A, dtype=float, copy=True)
    if A.shape[0] < 1:
        raise DomainError("graph has no vertices")
    if A.nnz and A.data.min() < 0:
        raise DomainError("negative adjacency weight")
    A.eliminate_zeros()
    A.sort_indices()
    degree = np.asarray(A.sum(axis=1)).ravel()
    isolated = degree == 0
    inv = np.zeros_like(degree)
    inv[~isolated] = 1.0 / degree[~isolated]
    P = sp.csr_matrix(sp.diags(inv) @ A)
    P.sort_indices()

    rows = np.repeat(np.arange(P.shape[0]), np.diff(P.indptr))
    cum = np.cumsum(P.data)
    starts = np.concatenate([[0.0], cum])[P.indptr[:-1]]
    within = cum - np.repeat(starts, np.diff(P.indptr))
    last = P.indptr[1:][~isolated] - 1
    within[last] = 1.0
    keys = rows + within
    return TransitionMatrix(P, degree, isolated, keys)


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_paths(tm: TransitionMatrix, roots, t: int, rng, n_walks: int = 1) -> np.ndarray:
    """Sample ``n_walks`` walks of length ``t`` from each root.

    Returns an integer array of shape ``(len(roots), n_walks, t + 1)``.
    """
    if t < 1:
        raise DomainError(f"walk length must be >= 1, got {t}")
    roots = np.asarray(roots, dtype=np.int64)
    if roots.size and (roots.min() < 0 or roots.max() >= tm.vertex_count):
        raise DomainError("root index out of range")
    rng = _as_rng(rng)
    u = rng.random((t, roots.size * n_walks))
    paths = np.empty((t + 1, roots.size * n_walks), dtype=np.int64)
    paths[0] = np.repeat(roots, n_walks)
    for s in range(t):
        paths[s + 1] = tm.step(paths[s], u[s])
    return paths.T.reshape(roots.size, n_walks, t + 1)


def sample_walk(tm: TransitionMatrix, root: int, t: int, rng) -> np.ndarray:
    return sample_paths(tm, [root], t, rng)[0, 0]


@dataclass(frozen=True, eq=False)
class WalkField:
    root: int
    scale: int
    paths: np.ndarray  # (K, t + 1)
    path_attributes: np.ndarray  # (K, t * d)

    @property
    def n_walks(self) -> int:
        return self.paths.shape[0]


def walk_scales(T: int) -> list[int]:
    if T < 2:
        raise DomainError(f"maximum walk scale must be >= 2, got {T}")
    return list(range(2, T + 1))


def sample_field_paths(tm: TransitionMatrix, T: int, K: int, rng) -> dict[int, np.ndarray]:
    """Paths for every vertex at every scale 2..T, keyed by scale."""
    if K < 1:
        raise DomainError(f"number of walks must be >= 1, got {K}")
    rng = _as_rng(rng)
    roots = np.arange(tm.vertex_count)
    return {t: sample_paths(tm, roots, t, rng, K) for t in walk_scales(T)}


def path_attributes(X: np.ndarray, paths: np.ndarray) -> np.ndarray:
    """Concatenate attributes of the non-root path vertices.

    ``paths`` has shape (..., K, t + 1); the result has shape (..., K, t * d).
    """
    gathered = X[paths[..., 1:]]
    return gathered.reshape(*paths.shape[:-1], -1)


def build_walk_fields(tm: TransitionMatrix, graph, T: int, K: int, rng) -> dict[int, dict[int, WalkField]]:
    """Walk fields for every vertex, as ``fields[vertex][scale]``."""
    X = graph.attributes
    by_scale = sample_field_paths(tm, T, K, rng)
    fields = {}
    for v in range(tm.vertex_count):
        fields[v] = {
            t: WalkField(v, t, p[v], path_attributes(X, p[v]))
            for t, p in by_scale.items()
        }
    return fields
