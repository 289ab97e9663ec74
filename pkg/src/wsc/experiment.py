"""Cross-validation protocol, parameter sweeps and result files."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .estimator import MUTAG_ARCH, WSCClassifier
from .exceptions import ConfigurationError, UsageError
from .graph import initialize_attributes, load_tu_dataset
from .model import parse_architecture
from .nn import TrainConfig, config_hash

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
SWEEP_AXES = {"T": "walk_scale", "C": "n_components", "K": "n_walks", "N": "architecture"}
# Smallest expected graph size allowed before the final global pooling.
MIN_POOLED_VERTICES = 2.0


@dataclass
class ExperimentConfig:
    dataset: str = "MUTAG"
    data_dir: str = "data"
    architecture: str = MUTAG_ARCH
    walk_scale: int = 3
    n_components: int = 3
    n_walks: int = 8
    train: TrainConfig = field(default_factory=lambda: TrainConfig(dampening=0.95))
    folds: int = 10
    repeats: int = 10
    out: str | None = None
    seed: int = 0
    attribute_mode: str | None = None
    feature_norm: str | None = "power"

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if self.folds < 2:
            raise ConfigurationError("folds must be at least 2")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be at least 1")
        if self.walk_scale < 2 or self.n_components < 1 or self.n_walks < 1:
            raise ConfigurationError("need walk_scale >= 2, n_components >= 1, n_walks >= 1")
        parse_architecture(self.architecture)

    def to_dict(self):
        d = asdict(self)
        d.pop("out")
        return d

    @property
    def hash(self):
        return config_hash(self.to_dict())

    def estimator(self, random_state):
        t = self.train
        return WSCClassifier(
            architecture=self.architecture,
            walk_scale=self.walk_scale,
            n_components=self.n_components,
            n_walks=self.n_walks,
            epochs=t.epochs,
            learning_rate=t.learning_rate,
            momentum=t.momentum,
            dampening=t.dampening,
            batch_size=t.batch_size,
            dropout=t.dropout_rate,
            feature_norm=self.feature_norm,
            random_state=random_state,
        )


@dataclass
class FoldResult:
    fold: int
    repeat: int
    accuracy: float
    final_loss: float
    first_loss: float
    epochs: int
    seconds: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass
class CVResult:
    config: ExperimentConfig
    results: list
    started: str = ""
    finished: str = ""

    @property
    def accuracies(self):
        return np.array([r.accuracy for r in self.results])

    def summary(self):
        return summarize(self.results)


def summarize(results):
    """Mean and population std over all fold accuracies, plus the std of per-repeat means."""
    if not results:
        raise UsageError("no fold results to summarize")
    acc = np.array([r.accuracy for r in results])
    repeats = sorted({r.repeat for r in results})
    means = np.array([np.mean([r.accuracy for r in results if r.repeat == k]) for k in repeats])
    return {
        "n_results": len(results),
        "mean": float(acc.mean()),
        "std": float(acc.std()),
        "repeat_means": [float(m) for m in means],
        "std_of_repeat_means": float(means.std()),
    }


def load_dataset(config: ExperimentConfig):
    ds = load_tu_dataset(config.data_dir, config.dataset)
    return initialize_attributes(ds, config.attribute_mode)


def stratified_folds(labels, n_folds, seed, max_attempts=10):
    """Test-index arrays of a seeded stratified split.

    Every training part must contain every class; otherwise the split is
    redrawn with the next seed after a warning.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if np.min(np.bincount(np.searchsorted(classes, labels))) < 2:
        raise ConfigurationError("every class needs at least two graphs")
    for attempt in range(max_attempts):
        skf = StratifiedKFold(n_folds, shuffle=True, random_state=seed + attempt)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            tests = [te for _, te in skf.split(np.zeros(len(labels)), labels)]
        if all(np.unique(np.delete(labels, te)).size == classes.size for te in tests):
            return tests
        warnings.warn(f"a training fold lacks a class; re-splitting (attempt {attempt + 1})")
    raise ConfigurationError("could not find a split with every class in every training fold")


def fold_seed(seed, repeat, fold):
    return int(np.random.SeedSequence([seed, repeat, fold]).generate_state(1)[0] >> 1)


def run_cross_validation(config: ExperimentConfig, dataset=None, progress=None) -> CVResult:
    """Train and evaluate one model per (repeat, fold).

    Folds are fixed by ``config.seed``; repeats reuse them with fresh
    initialization and walk seeds.
    """
    dataset = load_dataset(config) if dataset is None else dataset
    graphs, labels = dataset.graphs, dataset.labels
    tests = stratified_folds(labels, config.folds, config.seed)
    started = _now()
    results = []
    for repeat in range(config.repeats):
        for fold, test in enumerate(tests):
            train = np.setdiff1d(np.arange(len(graphs)), test)
            t0 = time.perf_counter()
            clf = config.estimator(fold_seed(config.seed, repeat, fold))
            clf.fit([graphs[i] for i in train], labels[train])
            acc = float(clf.score([graphs[i] for i in test], labels[test]))
            curve = clf.loss_curve_ or [float("nan")]
            res = FoldResult(fold, repeat, acc, curve[-1], curve[0], clf.n_epochs_,
                             time.perf_counter() - t0)
            results.append(res)
            logger.info("repeat %d fold %d acc %.4f loss %.4f -> %.4f (%.1fs)",
                        repeat, fold, acc, res.first_loss, res.final_loss, res.seconds)
            if progress is not None:
                progress(res)
    return CVResult(config, results, started, _now())


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sweep_config(base, axis, value):
    attr = SWEEP_AXES[axis]
    if attr != "architecture":
        value = int(value)
    return replace(base, **{attr: value})


def depth_guard(architecture, mean_vertices):
    """Reason string if fractional poolings shrink an average graph below the floor."""
    spec = parse_architecture(architecture)
    if not any(r > 0 for r in spec.pool_ratios):
        return None
    expected = mean_vertices * np.prod([r for r in spec.pool_ratios if r > 0])
    if expected < MIN_POOLED_VERTICES:
        return (f"expected {expected:.2f} vertices before global pooling "
                f"(< {MIN_POOLED_VERTICES:g}) for mean graph size {mean_vertices:.2f}")
    return None


def run_sweep(base: ExperimentConfig, axis, values, dataset=None):
    """One summary row per axis value; infeasible values are marked skipped."""
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    dataset = load_dataset(base) if dataset is None else dataset
    mean_m = float(np.mean([g.vertex_count for g in dataset.graphs]))
    rows = []
    for value in values:
        row = {"axis": axis, "value": value, "status": "ok", "reason": "",
               "mean": "", "std": "", "std_of_repeat_means": "", "n_results": 0}
        try:
            cfg = _sweep_config(base, axis, value)
            reason = depth_guard(cfg.architecture, mean_m)
        except ValueError as exc:
            reason = str(exc)
        if reason:
            row.update(status="skipped", reason=reason)
            logger.info("sweep %s=%s skipped: %s", axis, value, reason)
        else:
            s = run_cross_validation(cfg, dataset).summary()
            row.update(mean=s["mean"], std=s["std"],
                       std_of_repeat_means=s["std_of_repeat_means"], n_results=s["n_results"])
        rows.append(row)
    return rows


def emit_report(results: CVResult, output_dir):
    """Write ``summary.json`` and ``summary.csv``.

    Everything except the ``timing`` block is a pure function of the
    configuration, so replays produce identical files apart from it.
    """
    if not isinstance(results, CVResult) or not results.results:
        raise UsageError("refusing to write a report without fold results")
    os.makedirs(output_dir, exist_ok=True)
    rows = [asdict(r) for r in results.results]
    doc = {
        "format_version": REPORT_VERSION,
        "config_hash": results.config.hash,
        "config": results.config.to_dict(),
        "results": [{k: v for k, v in r.items() if k != "seconds"} for r in rows],
        "aggregate": results.summary(),
        "timing": {
            "started": results.started,
            "finished": results.finished,
            "seconds": [r["seconds"] for r in rows],
        },
    }
    json_path = os.path.join(output_dir, "summary.json")
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = os.path.join(output_dir, "summary.csv")
    names = [f.name for f in fields(FoldResult)]
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        w.writerows(rows)
    return [json_path, csv_path]


SWEEP_FIELDS = ["axis", "value", "status", "reason", "mean", "std", "std_of_repeat_means", "n_results"]


def emit_sweep(rows, output_dir, axis=None):
    if not rows:
        raise UsageError("refusing to write an empty sweep table")
    axis = axis or rows[0]["axis"]
    os.makedirs(output_dir, exist_ok=True)
    csv_path = os.path.join(output_dir, f"sweep_{axis}.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)
    json_path = os.path.join(output_dir, f"sweep_{axis}.json")
    with open(json_path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    return [csv_path, json_path]


def read_report(output_dir):
    with open(os.path.join(output_dir, "summary.json")) as fh:
        return json.load(fh)
