"""Graph data model and TU benchmark ingestion."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigurationError, FormatError, IngestionError

ATTRIBUTE_MODES = ("label_onehot", "degree_scalar", "label_and_degree")

# social datasets carry no node labels
SOCIAL_DATASETS = {
    "COLLAB",
    "REDDIT-BINARY",
    "REDDIT-MULTI-5K",
    "REDDIT-MULTI-12K",
    "IMDB-BINARY",
    "IMDB-MULTI",
}


@dataclass(frozen=True, eq=False)
class Graph:
    """An attributed graph.

    ``adjacency`` is an m x m CSR matrix with nonnegative weights and
    ``attributes`` an m x d array. ``node_labels`` holds the raw discrete
    vertex labels when the source provides them.
    """

    adjacency: sp.csr_matrix
    attributes: np.ndarray
    label: int | None = None
    node_labels: np.ndarray | None = None

    def __post_init__(self):
        m = self.adjacency.shape[0]
        if self.adjacency.shape != (m, m):
            raise ValueError(f"adjacency must be square, got {self.adjacency.shape}")
        if self.attributes.ndim != 2 or self.attributes.shape[0] != m:
            raise ValueError(
                f"attributes must have shape ({m}, d), got {self.attributes.shape}"
            )

    @property
    def vertex_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.attributes.shape[1]

    def with_attributes(self, attributes: np.ndarray) -> "Graph":
        return replace(self, attributes=np.asarray(attributes, dtype=float))

    def degrees(self) -> np.ndarray:
        """Binary degree (number of nonzero entries per row)."""
        return np.diff(self.adjacency.indptr).astype(float)


def make_graph(adjacency, attributes=None, label=None, node_labels=None) -> Graph:
    """Build a :class:`Graph` from dense or sparse input."""
    A = sp.csr_matrix(adjacency, dtype=float)
    A.eliminate_zeros()
    A.sort_indices()
    m = A.shape[0]
    if attributes is None:
        attributes = np.zeros((m, 0))
    X = np.asarray(attributes, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if node_labels is not None:
        node_labels = np.asarray(node_labels, dtype=np.int64)
    return Graph(A, X, None if label is None else int(label), node_labels)


@dataclass
class Dataset:
    graphs: list[Graph]
    class_count: int
    name: str = ""
    attribute_mode: str | None = None
    label_values: np.ndarray | None = None
    node_label_values: np.ndarray | None = None
    directed: bool = False
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, idx):
        return self.graphs[idx]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def n_features(self) -> int:
        return self.graphs[0].n_features if self.graphs else 0

    def stats(self) -> dict:
        sizes = np.array([g.vertex_count for g in self.graphs])
        edges = np.array([g.adjacency.nnz for g in self.graphs])
        if not self.directed:
            edges = edges / 2
        return {
            "graphs": len(self.graphs),
            "classes": self.class_count,
            "avg_nodes": float(sizes.mean()),
            "avg_edges": float(edges.mean()),
            "max_nodes": int(sizes.max()),
            "node_labels": (
                0 if self.node_label_values is None else len(self.node_label_values)
            ),
        }


_SPLIT = re.compile(r"[,\s]+")


def _read_rows(path, *, dtype=int, required=True):
    if not os.path.exists(path):
        if required:
            raise IngestionError(f"missing file: {path}")
        return None
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([dtype(tok) for tok in _SPLIT.split(line) if tok])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: cannot parse {line!r}") from None
    return rows


def _read_column(path, *, required=True):
    rows = _read_rows(path, required=required)
    if rows is None:
        return None
    for lineno, row in enumerate(rows, 1):
        if len(row) != 1:
            raise FormatError(f"{path}:{lineno}: expected one value, got {len(row)}")
    return np.array([r[0] for r in rows], dtype=np.int64)


def load_tu_dataset(root_path, name: str, *, directed=False, use_node_attributes=False) -> Dataset:
    """Read a dataset in the TU plain-text layout.

    Looks for ``<name>_A.txt`` etc. in ``root_path`` or ``root_path/<name>``.
    Vertex ids in the files are 1-indexed. Graph labels are remapped to
    ``0..l-1`` in sorted order of the raw values.
    """
    root = os.fspath(root_path)
    if not os.path.exists(os.path.join(root, f"{name}_A.txt")):
        nested = os.path.join(root, name)
        if os.path.isdir(nested):
            root = nested
    prefix = os.path.join(root, name)

    a_path = f"{prefix}_A.txt"
    gi_path = f"{prefix}_graph_indicator.txt"
    gl_path = f"{prefix}_graph_labels.txt"
    for p in (a_path, gi_path, gl_path):
        if not os.path.exists(p):
            raise IngestionError(f"missing file: {p}")

    indicator = _read_column(gi_path)
    raw_graph_labels = _read_column(gl_path)
    n_vertices = indicator.size
    n_graphs = raw_graph_labels.size
    if n_vertices == 0 or n_graphs == 0:
        raise IngestionError(f"empty dataset files under {root}")
    if indicator.min() < 1 or indicator.max() > n_graphs:
        bad = int(np.flatnonzero((indicator < 1) | (indicator > n_graphs))[0]) + 1
        raise FormatError(f"{gi_path}:{bad}: graph id outside 1..{n_graphs}")
    if np.any(np.diff(indicator) < 0):
        bad = int(np.flatnonzero(np.diff(indicator) < 0)[0]) + 2
        raise FormatError(f"{gi_path}:{bad}: vertices are not grouped by graph")

    edges = _read_rows(a_path)
    for lineno, row in enumerate(edges, 1):
        if len(row) != 2:
            raise FormatError(f"{a_path}:{lineno}: expected an edge pair")
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2) - 1
    if edges.size:
        out_of_range = (edges < 0) | (edges >= n_vertices)
        if out_of_range.any():
            bad = int(np.flatnonzero(out_of_range.any(axis=1))[0]) + 1
            raise FormatError(f"{a_path}:{bad}: dangling vertex index")
        cross = indicator[edges[:, 0]] != indicator[edges[:, 1]]
        if cross.any():
            bad = int(np.flatnonzero(cross)[0]) + 1
            raise FormatError(f"{a_path}:{bad}: edge joins two different graphs")

    node_labels = _read_column(f"{prefix}_node_labels.txt", required=False)
    if node_labels is not None and node_labels.size != n_vertices:
        raise FormatError(
            f"{prefix}_node_labels.txt: {node_labels.size} lines, expected {n_vertices}"
        )
    node_attrs = None
    if use_node_attributes:
        rows = _read_rows(f"{prefix}_node_attributes.txt", dtype=float, required=False)
        if rows is not None:
            node_attrs = np.array(rows, dtype=float)
            if node_attrs.shape[0] != n_vertices:
                raise FormatError(
                    f"{prefix}_node_attributes.txt: {node_attrs.shape[0]} lines, "
                    f"expected {n_vertices}"
                )

    label_values, graph_labels = np.unique(raw_graph_labels, return_inverse=True)
    node_label_values = None if node_labels is None else np.unique(node_labels)

    A_all = sp.coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_vertices, n_vertices)
    ).tocsr()
    A_all.data[:] = 1.0  # duplicate edge lines collapse to weight 1
    if not directed:
        A_all = A_all.maximum(A_all.T).tocsr()

    bounds = np.searchsorted(indicator, np.arange(1, n_graphs + 2))
    graphs = []
    for gid in range(n_graphs):
        lo, hi = bounds[gid], bounds[gid + 1]
        A = A_all[lo:hi, lo:hi].tocsr()
        nl = None if node_labels is None else node_labels[lo:hi]
        X = np.zeros((hi - lo, 0)) if node_attrs is None else node_attrs[lo:hi]
        graphs.append(make_graph(A, X, int(graph_labels[gid]), nl))

    if len(label_values) < 2:
        raise FormatError(f"{gl_path}: need at least two classes")
    return Dataset(
        graphs=graphs,
        class_count=len(label_values),
        name=name,
        label_values=label_values,
        node_label_values=node_label_values,
        directed=directed,
    )


def save_tu_dataset(dataset: Dataset, root_path, name: str | None = None) -> str:
    """Write ``dataset`` in the TU layout and return the directory used."""
    name = name or dataset.name
    os.makedirs(root_path, exist_ok=True)
    prefix = os.path.join(root_path, name)
    label_values = (
        dataset.label_values
        if dataset.label_values is not None
        else np.arange(dataset.class_count)
    )
    offset = 0
    with open(f"{prefix}_A.txt", "w") as fa, open(
        f"{prefix}_graph_indicator.txt", "w"
    ) as fi, open(f"{prefix}_graph_labels.txt", "w") as fl:
        for gid, g in enumerate(dataset.graphs, 1):
            coo = g.adjacency.tocoo()
            order = np.lexsort((coo.col, coo.row))
            for r, c in zip(coo.row[order], coo.col[order]):
                fa.write(f"{r + offset + 1}, {c + offset + 1}\n")
            fi.write(f"{gid}\n" * g.vertex_count)
            fl.write(f"{label_values[g.label]}\n")
            offset += g.vertex_count
    if all(g.node_labels is not None for g in dataset.graphs):
        with open(f"{prefix}_node_labels.txt", "w") as fn:
            for g in dataset.graphs:
                fn.writelines(f"{v}\n" for v in g.node_labels)
    return os.fspath(root_path)


def default_attribute_mode(dataset: Dataset) -> str:
    if dataset.name.upper() in SOCIAL_DATASETS or any(
        g.node_labels is None for g in dataset.graphs
    ):
        return "degree_scalar"
    return "label_and_degree"


def initialize_attributes(dataset: Dataset, mode: str | None = None) -> Dataset:
    """Replace vertex attributes by one-hot node labels and/or raw degree.

    Degree is the binary row count of the adjacency. Any real-valued
    attributes already on the graphs are appended after the derived ones.
    """
    mode = mode or default_attribute_mode(dataset)
    if mode not in ATTRIBUTE_MODES:
        raise ConfigurationError(f"unknown attribute mode {mode!r}")
    needs_labels = mode in ("label_onehot", "label_and_degree")
    if needs_labels and any(g.node_labels is None for g in dataset.graphs):
        raise ConfigurationError(f"attribute mode {mode!r} requires node labels")

    values = dataset.node_label_values
    if needs_labels and values is None:
        values = np.unique(np.concatenate([g.node_labels for g in dataset.graphs]))

    graphs = []
    for g in dataset.graphs:
        parts = []
        if needs_labels:
            onehot = np.zeros((g.vertex_count, len(values)))
            onehot[np.arange(g.vertex_count), np.searchsorted(values, g.node_labels)] = 1.0
            parts.append(onehot)
        if mode in ("degree_scalar", "label_and_degree"):
            parts.append(g.degrees()[:, None])
        if dataset.attribute_mode is None and g.attributes.shape[1]:
            parts.append(g.attributes)
        graphs.append(g.with_attributes(np.hstack(parts)))
    return replace(dataset, graphs=graphs, attribute_mode=mode, node_label_values=values)
