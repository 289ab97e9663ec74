from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(eq=False)
class GraphBatch:
    """Disjoint union of graphs, processed as one block-diagonal graph.

    ``ptr[b]:ptr[b+1]`` are the vertex rows of graph ``b``.
    """

    adjacency: sp.csr_matrix
    attributes: np.ndarray
    ptr: np.ndarray

    @classmethod
    def from_graphs(cls, graphs):
        sizes = np.array([g.vertex_count for g in graphs], dtype=np.int64)
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        A = sp.block_diag([g.adjacency for g in graphs], format="csr")
        A.sort_indices()
        X = np.vstack([g.attributes for g in graphs])
        return cls(A, X, ptr)

    @property
    def n_graphs(self) -> int:
        return len(self.ptr) - 1

    @property
    def vertex_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def graph_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_graphs), np.diff(self.ptr))

    def block(self, b):
        lo, hi = self.ptr[b], self.ptr[b + 1]
        return self.adjacency[lo:hi, lo:hi], self.attributes[lo:hi]
