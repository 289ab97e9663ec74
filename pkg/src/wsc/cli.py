"""Command line entry point: ``wsc {train,cv,sweep,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .exceptions import ConfigurationError, WSCError
from .experiment import (
    SWEEP_AXES,
    ExperimentConfig,
    emit_report,
    emit_sweep,
    load_dataset,
    read_report,
    run_cross_validation,
    run_sweep,
)
from .nn import TrainConfig

# flag dest -> (section, field) in ExperimentConfig / TrainConfig
_FIELDS = {
    "dataset": ("exp", "dataset", str),
    "data_dir": ("exp", "data_dir", str),
    "arch": ("exp", "architecture", str),
    "walk_scale": ("exp", "walk_scale", int),
    "components": ("exp", "n_components", int),
    "samples": ("exp", "n_walks", int),
    "folds": ("exp", "folds", int),
    "repeats": ("exp", "repeats", int),
    "seed": ("exp", "seed", int),
    "out": ("exp", "out", str),
    "attributes": ("exp", "attribute_mode", str),
    "feature_norm": ("exp", "feature_norm", str),
    "epochs": ("train", "epochs", int),
    "lr": ("train", "learning_rate", float),
    "momentum": ("train", "momentum", float),
    "dampening": ("train", "dampening", float),
    "batch_size": ("train", "batch_size", int),
    "dropout": ("train", "dropout_rate", float),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use flag names."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, _, value = line.partition(" ")
            key = key.strip().lstrip("-").replace("-", "_")
            if key not in _FIELDS:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def build_config(args) -> ExperimentConfig:
    merged = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    exp, train = {}, {"seed": 0, "dampening": 0.95}
    for key, raw in merged.items():
        section, name, cast = _FIELDS[key]
        value = None if raw in ("none", "None") and name == "feature_norm" else cast(raw)
        (exp if section == "exp" else train)[name] = value
    train["seed"] = exp.get("seed", 0)
    return ExperimentConfig(train=TrainConfig(**train), **exp)


def _add_common(p):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--dataset", help="TU dataset name, e.g. MUTAG")
    p.add_argument("--data-dir", help="directory holding <dataset>/<dataset>_*.txt")
    p.add_argument("--arch", help="architecture string, e.g. C(64)-P(0.25)-C(128)-P(0.0)-FC(256)")
    p.add_argument("--walk-scale", type=int, metavar="T")
    p.add_argument("--components", type=int, metavar="C")
    p.add_argument("--samples", type=int, metavar="K", help="walks per walk field")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--dampening", type=float, help="momentum dampening (default 0.95)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--attributes", choices=["label_onehot", "degree_scalar", "label_and_degree"])
    p.add_argument("--feature-norm", choices=["power", "l2", "none"])
    p.add_argument("--out", help="output directory")


def make_parser():
    parser = argparse.ArgumentParser(prog="wsc", description="Walk-steered convolution graph classifier")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("train", help="fit on the whole dataset and save a checkpoint"))
    _add_common(sub.add_parser("cv", help="repeated stratified k-fold cross-validation"))
    sw = sub.add_parser("sweep", help="cross-validate over values of one parameter")
    _add_common(sw)
    sw.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sw.add_argument("--values", required=True, nargs="+",
                    help="integers for T/C/K, architecture strings for N")
    rp = sub.add_parser("report", help="print the aggregate of a finished run")
    rp.add_argument("--out", required=True)
    return parser


def _out_dir(config):
    return config.out or os.path.join("runs", config.dataset)


def cmd_train(config):
    ds = load_dataset(config)
    clf = config.estimator(config.seed).fit(ds.graphs, ds.labels)
    out = _out_dir(config)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "model.npz")
    clf.save(path)
    acc = clf.score(ds.graphs, ds.labels)
    print(f"trained {config.train.epochs} epochs; loss {clf.loss_curve_[-1]:.4f}; "
          f"training accuracy {acc:.4f}; saved {path}")


def cmd_cv(config):
    result = run_cross_validation(
        config, progress=lambda r: print(f"repeat {r.repeat} fold {r.fold}: {r.accuracy:.4f}", flush=True)
    )
    paths = emit_report(result, _out_dir(config))
    s = result.summary()
    print(f"mean {100 * s['mean']:.2f} +- {100 * s['std']:.2f} over {s['n_results']} folds")
    print("wrote " + ", ".join(paths))


def cmd_sweep(config, axis, values):
    rows = run_sweep(config, axis, values)
    paths = emit_sweep(rows, _out_dir(config), axis)
    for r in rows:
        if r["status"] == "ok":
            print(f"{axis}={r['value']}: {100 * r['mean']:.2f} +- {100 * r['std']:.2f}")
        else:
            print(f"{axis}={r['value']}: skipped ({r['reason']})")
    print("wrote " + ", ".join(paths))


def cmd_report(out):
    names = sorted(os.listdir(out))
    if "summary.json" not in names and not any(n.startswith("sweep_") for n in names):
        raise ConfigurationError(f"no summary.json or sweep files in {out}")
    if "summary.json" in names:
        doc = read_report(out)
        agg = doc["aggregate"]
        cfg = doc["config"]
        print(f"{cfg['dataset']} {cfg['architecture']} (config {doc['config_hash']})")
        print(f"mean {100 * agg['mean']:.2f} +- {100 * agg['std']:.2f} over {agg['n_results']} folds; "
              f"std of repeat means {100 * agg['std_of_repeat_means']:.2f}")
    for name in names:
        if name.startswith("sweep_") and name.endswith(".json"):
            with open(os.path.join(out, name)) as fh:
                rows = json.load(fh)
            print(name[:-5] + ": " + ", ".join(
                f"{r['value']}={'skipped' if r['status'] != 'ok' else format(100 * r['mean'], '.2f')}"
                for r in rows))


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cmd_report(args.out)
            return 0
        config = build_config(args)
        if args.command == "train":
            cmd_train(config)
        elif args.command == "cv":
            cmd_cv(config)
        else:
            cmd_sweep(config, args.axis, args.values)
    except (WSCError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
