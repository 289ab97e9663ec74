"""scikit-learn compatible graph classifier."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .batch import GraphBatch
from .graph import Dataset, Graph
from .model import WSCNetwork, parse_architecture
from .nn import (
    TrainConfig,
    config_hash,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    softmax,
    softmax_cross_entropy,
)

logger = logging.getLogger(__name__)

MUTAG_ARCH = "C(64)-P(0.25)-C(128)-P(0.0)-FC(256)"
DEFAULT_ARCH = "C(64)-P(0.25)-C(128)-P(0.25)-C(256)-P(0.0)-FC(256)"


def check_graphs(X, y=None, *, n_features=None):
    """Validate a graph collection and optional labels.

    Accepts a :class:`Dataset` or a sequence of :class:`Graph`. When ``y`` is
    None the graphs' own labels are used (if every graph carries one).
    """
    if isinstance(X, Dataset):
        X = X.graphs
    if isinstance(X, Graph):
        raise TypeError("expected a sequence of graphs, got a single Graph")
    graphs = list(X)
    if not graphs:
        raise ValueError("empty graph collection")
    for i, g in enumerate(graphs):
        if not isinstance(g, Graph):
            raise TypeError(f"item {i} is {type(g).__name__}, not Graph")
        if g.vertex_count == 0:
            raise ValueError(f"graph {i} has no vertices")
        if not np.all(np.isfinite(g.attributes)):
            raise ValueError(f"graph {i} has non-finite attributes")
    widths = {g.n_features for g in graphs}
    if len(widths) != 1:
        raise ValueError(f"inconsistent attribute widths {sorted(widths)}")
    width = widths.pop()
    if width == 0:
        raise ValueError("graphs have no attributes; call initialize_attributes first")
    if n_features is not None and width != n_features:
        raise ValueError(f"expected {n_features} attributes per vertex, got {width}")
    if y is None:
        if all(g.label is not None for g in graphs):
            y = np.array([g.label for g in graphs])
    else:
        y = np.asarray(y)
        if y.shape != (len(graphs),):
            raise ValueError(f"y has shape {y.shape}, expected ({len(graphs)},)")
    return graphs, y


class WSCClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Walk-steered convolution network for graph classification.

    ``fit`` trains with momentum SGD on mini-batches of graphs; walk fields
    are resampled for every batch of every epoch. ``transform`` returns the
    graph embeddings that enter the fully connected layer.
    """

    def __init__(
        self,
        architecture=MUTAG_ARCH,
        walk_scale=3,
        n_components=3,
        n_walks=8,
        epochs=400,
        learning_rate=0.1,
        momentum=0.95,
        dampening=0.95,
        batch_size=100,
        dropout=0.5,
        feature_norm="power",
        random_state=0,
        verbose=False,
    ):
        self.architecture = architecture
        self.walk_scale = walk_scale
        self.n_components = n_components
        self.n_walks = n_walks
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.dampening = dampening
        self.batch_size = batch_size
        self.dropout = dropout
        self.feature_norm = feature_norm
        self.random_state = random_state
        self.verbose = verbose

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            dampening=self.dampening,
            epochs=self.epochs,
            batch_size=self.batch_size,
            dropout_rate=self.dropout,
            seed=self._seed(),
        )

    def _seed(self):
        if self.random_state is None:
            return int(np.random.SeedSequence().entropy % (2**31))
        if isinstance(self.random_state, np.random.Generator):
            return int(self.random_state.integers(2**31))
        return int(self.random_state)

    def _build(self, n_features, n_classes, seed):
        return WSCNetwork(
            parse_architecture(self.architecture),
            n_features,
            n_classes,
            T=self.walk_scale,
            C=self.n_components,
            K=self.n_walks,
            dropout=self.dropout,
            seed=seed,
            feature_norm=self.feature_norm,
        )

    def fit(self, X, y=None):
        graphs, y = check_graphs(X, y)
        if y is None:
            raise ValueError("labels required: pass y or graphs with labels")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        config = self._train_config()
        seed = config.seed
        self.n_features_in_ = graphs[0].n_features
        self.network_ = self._build(self.n_features_in_, len(self.classes_), seed)
        self._eval_seed = seed
        params = self.network_.parameters
        order_rng = np.random.default_rng([seed, 1])
        self.loss_curve_ = []
        n = len(graphs)
        for epoch in range(config.epochs):
            perm = order_rng.permutation(n)
            losses, counts = [], []
            for b, start in enumerate(range(0, n, config.batch_size)):
                idx = perm[start:start + config.batch_size]
                batch = GraphBatch.from_graphs([graphs[i] for i in idx])
                logits = self.network_.forward(
                    batch, training=True, walk_rng_keys=(seed, 2, epoch, b)
                )
                loss, d_logits = softmax_cross_entropy(logits, y_idx[idx])
                self.network_.backward(d_logits)
                sgd_step(params, config)
                losses.append(loss)
                counts.append(len(idx))
            epoch_loss = float(np.average(losses, weights=counts)) if losses else float("nan")
            self.loss_curve_.append(epoch_loss)
            if self.verbose:
                logger.info("epoch %d loss %.4f", epoch + 1, epoch_loss)
        self.n_epochs_ = config.epochs
        return self

    def _forward_all(self, X, method):
        check_is_fitted(self, "network_")
        graphs, _ = check_graphs(X, n_features=self.n_features_in_)
        out = []
        for b, start in enumerate(range(0, len(graphs), self.batch_size)):
            batch = GraphBatch.from_graphs(graphs[start:start + self.batch_size])
            keys = (self._eval_seed, 3, b)
            if method == "embed":
                out.append(self.network_.embed(batch, keys))
            else:
                out.append(self.network_.forward(batch, training=False, walk_rng_keys=keys))
        return np.vstack(out)

    def decision_function(self, X):
        return self._forward_all(X, "logits")

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def transform(self, X):
        return self._forward_all(X, "embed")

    def save(self, path):
        check_is_fitted(self, "network_")
        params = self.get_params()
        meta = {
            "estimator_params": {k: v for k, v in params.items() if k != "random_state"},
            "random_state": self._eval_seed,
            "classes": self.classes_.tolist(),
            "n_features_in": self.n_features_in_,
            "config_hash": config_hash({**params, "random_state": self._eval_seed}),
        }
        save_checkpoint(path, self.network_.parameters, meta)

    @classmethod
    def load(cls, path):
        values, meta = load_checkpoint(path)
        est = cls(**meta["estimator_params"], random_state=meta["random_state"])
        est.classes_ = np.asarray(meta["classes"])
        est.n_features_in_ = meta["n_features_in"]
        est._eval_seed = meta["random_state"]
        est.network_ = est._build(est.n_features_in_, len(est.classes_), est._eval_seed)
        named = est.network_.named_parameters()
        if set(named) != set(values):
            raise ValueError("checkpoint parameters do not match the architecture")
        for name, p in named.items():
            if p.value.shape != values[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            p.value[...] = values[name]
        return est
