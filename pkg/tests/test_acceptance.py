"""Acceptance criteria, one check per criterion.

Run under pytest (a summary line per criterion is printed at the end of
the session) or directly::

    python tests/test_acceptance.py [--quick]

``--quick`` skips the two MUTAG cross-validation runs (criteria 6 and 8).
"""

import json
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helpers import central_diff, matches_ptap, random_adjacency, random_graph, rel_err  # noqa: E402
from wsc.batch import GraphBatch  # noqa: E402
from wsc.coarsen import cluster, target_clusters  # noqa: E402
from wsc.conv import WSCLayer  # noqa: E402
from wsc.estimator import DEFAULT_ARCH, MUTAG_ARCH  # noqa: E402
from wsc.experiment import ExperimentConfig, emit_report, run_cross_validation  # noqa: E402
from wsc.gmm import GmmParameterSet, gradient_features, log_likelihood  # noqa: E402
from wsc.model import WSCNetwork  # noqa: E402
from wsc.nn import TrainConfig, softmax_cross_entropy  # noqa: E402
from wsc.walks import build_transition, sample_field_paths, sample_paths  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "..", "data")
RESULTS = {}


def record(n, ok, detail):
    status = "SKIP" if ok is None else ("PASS" if bool(ok) else "FAIL")
    RESULTS[n] = f"criterion {n:>2}: {status}  {detail}"
    return ok


# 1 and 2: gradient features against finite differences of the log-likelihood

def _fd_features(p, x, h=1e-5):
    sigma = np.exp(p.rho)

    def ll():
        return log_likelihood(GmmParameterSet(p.scale, p.alpha, p.mu, np.log(sigma)), x)

    return np.concatenate([central_diff(ll, a, h).ravel() for a in (p.alpha, p.mu, sigma)])


def check_feature_oracle(n_configs=200, seed=0):
    rng = np.random.default_rng(seed)
    worst_err = worst_sum = 0.0
    t0 = time.perf_counter()
    for _ in range(n_configs):
        t, d, C, K = int(rng.integers(2, 4)), int(rng.integers(1, 9)), int(rng.integers(1, 6)), int(rng.integers(1, 9))
        q = t * d
        p = GmmParameterSet(t, rng.normal(size=C), rng.normal(size=(C, q)), rng.normal(scale=0.3, size=(C, q)))
        x = rng.normal(size=(K, q))
        F = gradient_features(p, x)
        worst_err = max(worst_err, rel_err(F, _fd_features(p, x)))
        worst_sum = max(worst_sum, abs(F[:C].sum()))
    return worst_err, worst_sum, time.perf_counter() - t0


@pytest.fixture(scope="module")
def oracle_run():
    return check_feature_oracle()


def test_criterion_01_feature_oracle(oracle_run):
    err, _, secs = oracle_run
    ok = err < 1e-6 and secs < 5
    record(1, ok, f"200 configs, max rel err {err:.2e} (< 1e-6), {secs:.2f}s (< 5s)")
    assert ok


def test_criterion_02_zero_sum_alpha(oracle_run):
    _, worst, _ = oracle_run
    ok = worst <= 1e-8
    record(2, ok, f"max |sum alpha block| {worst:.2e} (<= 1e-8)")
    assert ok


# 3: end-to-end gradient check with frozen walks and dropout mask

def check_end_to_end_gradient(seed=0):
    rng = np.random.default_rng(seed)
    net = WSCNetwork("C(4)-P(0.5)-C(8)-P(0.0)-FC(8)", 3, 2, T=3, C=3, K=4, dropout=0.5, seed=seed)
    graphs = [random_graph(rng, m, 3, connected=True) for m in (5, 6)]
    batch = GraphBatch.from_graphs(graphs)
    labels = np.array([0, 1])

    def loss():
        logits = net.forward(batch, training=True, walk_rng_keys=(seed, 99),
                             dropout_rng=np.random.default_rng(7))
        return softmax_cross_entropy(logits, labels)

    t0 = time.perf_counter()
    net.zero_grad()
    net.backward(loss()[1])
    analytic = {p.name: p.grad.copy() for p in net.parameters}
    worst, worst_name = 0.0, ""
    for p in net.parameters:
        e = rel_err(analytic[p.name], central_diff(lambda: loss()[0], p.value, 1e-6))
        if e > worst:
            worst, worst_name = e, p.name
    kinds = {k for k in ("alpha", "mu", "rho", ".g", ".f.", "phi", "fc.", "head.")
             if any(k in name for name in analytic)}
    return worst, worst_name, len(kinds) == 8, time.perf_counter() - t0


def test_criterion_03_end_to_end_gradient():
    worst, name, covered, secs = check_end_to_end_gradient()
    ok = worst < 1e-4 and covered and secs < 30
    record(3, ok, f"every parameter, max rel err {worst:.2e} at {name} (< 1e-4), {secs:.1f}s (< 30s)")
    assert ok


# 4: walk sampler distribution

def check_sampler(seed=0):
    rng = np.random.default_rng(seed)
    A = random_adjacency(rng, 10, p=0.5, weighted=True, connected=True)
    tm = build_transition(A)
    P = tm.row_normalized.toarray()
    row_dev = float(np.abs(P.sum(axis=1) - 1).max())
    N = 100_000
    steps = sample_paths(tm, np.arange(10), 1, rng, n_walks=N)[:, :, 1]
    freq = np.stack([np.bincount(s, minlength=10) / N for s in steps])
    return float(np.abs(freq - P).max()), row_dev


def test_criterion_04_sampler_distribution():
    linf, row_dev = check_sampler()
    ok = linf < 0.01 and row_dev <= 1e-9
    record(4, ok, f"L-inf {linf:.4f} (< 0.01), row-sum deviation {row_dev:.1e} (<= 1e-9)")
    assert ok


# 5: coarsening invariants

def check_coarsening(n_graphs=500, seed=0):
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures = []
    for i in range(n_graphs):
        m = int(rng.integers(1, 51))
        A = random_adjacency(rng, m, p=float(rng.uniform(0.02, 0.5)), weighted=bool(i % 2))
        X = rng.normal(size=(m, 4))
        n = target_clusters(m, float(rng.choice([0.0, 0.1, 0.25, 0.5, 0.75, 0.9])))
        plan = cluster(rng.normal(size=m), A, n, X)
        P = plan.P.toarray()
        A1 = plan.coarse_adjacency.toarray()
        checks = {
            "one-hot": np.array_equal(P.sum(axis=1), np.ones(m)) and set(np.unique(P)) <= {0.0, 1.0},
            "non-empty": bool((P.sum(axis=0) >= 1).all()) and P.shape[1] == n,
            "PtAP": matches_ptap(A1, P, A),
            "symmetric": np.array_equal(A1, A1.T),
            "max-pool": all(np.array_equal(plan.coarse_attributes[j], X[plan.assignment == j].max(axis=0))
                            for j in range(n)),
        }
        failures += [f"graph {i}: {k}" for k, v in checks.items() if not v]
    return failures, time.perf_counter() - t0


def test_criterion_05_coarsening_invariants():
    failures, secs = check_coarsening()
    ok = not failures and secs < 10
    record(5, ok, f"500 graphs, {len(failures)} violations, {secs:.2f}s (< 10s)")
    assert ok, failures[:5]


# 6 and 8: MUTAG cross-validation

def mutag_config(**kw):
    base = dict(dataset="MUTAG", data_dir=DATA, architecture=MUTAG_ARCH, walk_scale=3,
                n_components=3, n_walks=8, folds=10, repeats=1, seed=0,
                train=TrainConfig(learning_rate=0.1, momentum=0.95, dampening=0.95,
                                  epochs=400, batch_size=100, dropout_rate=0.5))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def mutag_cv():
    t0 = time.perf_counter()
    result = run_cross_validation(mutag_config())
    return result, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_06_mutag_accuracy(mutag_cv):
    result, secs = mutag_cv
    s = result.summary()
    ok = s["mean"] >= 0.85 and secs < 1800
    record(6, ok, f"MUTAG 10-fold mean {100 * s['mean']:.2f} +- {100 * s['std']:.2f} (>= 85), "
                  f"{secs / 60:.1f} min (< 30)")
    assert ok


def check_ptc():
    for name in ("PTC_MR", "PTC"):
        if os.path.isdir(os.path.join(DATA, name)):
            r = run_cross_validation(mutag_config(dataset=name, architecture=DEFAULT_ARCH))
            return r.summary()["mean"]
    return None


@pytest.mark.slow
def test_criterion_07_ptc_accuracy():
    mean = check_ptc()
    if mean is None:
        record(7, None, "PTC data not present under data/; number not recorded")
        pytest.skip("PTC dataset unavailable")
    ok = mean >= 0.62
    record(7, ok, f"PTC 10-fold mean {100 * mean:.2f} (>= 62)")
    assert ok


@pytest.mark.slow
def test_criterion_08_training_sanity(mutag_cv):
    result, _ = mutag_cv
    ratios = [r.final_loss / r.first_loss for r in result.results]
    ok = max(ratios) < 0.5
    record(8, ok, f"worst final/first loss ratio over 10 folds {max(ratios):.3f} (< 0.5)")
    assert ok


# 9: determinism replay

def check_replay(tmp_dir):
    cfg = mutag_config(folds=3, train=TrainConfig(epochs=3, dampening=0.95))
    blobs, accs = [], []
    for run in range(2):
        res = run_cross_validation(cfg)
        out = os.path.join(tmp_dir, f"run{run}")
        emit_report(res, out)
        with open(os.path.join(out, "summary.json")) as fh:
            doc = json.load(fh)
        doc.pop("timing")
        blobs.append(json.dumps(doc, sort_keys=True).encode())
        accs.append(np.array([r.accuracy for r in res.results]).tobytes())
    return blobs[0] == blobs[1] and accs[0] == accs[1]


def test_criterion_09_determinism(tmp_path):
    ok = check_replay(str(tmp_path))
    record(9, ok, "two MUTAG runs with one seed: fold accuracies and summary.json "
                  + ("byte-identical" if ok else "differ"))
    assert ok


# 10: permutation equivariance

def check_equivariance(n_graphs=50, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_graphs):
        m, d = int(rng.integers(2, 40)), int(rng.integers(1, 9))
        A = random_adjacency(rng, m, weighted=True)
        X = rng.normal(size=(m, d))
        fields = sample_field_paths(build_transition(A), 3, 8, rng)
        layer = WSCLayer("c", d, 16, 3, 3, 8, rng)
        perm = rng.permutation(m)
        inv = np.argsort(perm)
        moved = {t: inv[p[perm]] for t, p in fields.items()}
        if not np.array_equal(layer.forward(X, fields)[perm], layer.forward(X[perm], moved)):
            bad += 1
    return bad


def test_criterion_10_permutation_equivariance():
    bad = check_equivariance()
    ok = bad == 0
    record(10, ok, f"50 graphs, {bad} with non-identical permuted outputs")
    assert ok


def main(argv):
    import tempfile

    quick = "--quick" in argv
    err, worst, secs = check_feature_oracle()
    record(1, err < 1e-6 and secs < 5, f"200 configs, max rel err {err:.2e}, {secs:.2f}s")
    record(2, worst <= 1e-8, f"max |sum alpha block| {worst:.2e}")
    w, name, covered, secs = check_end_to_end_gradient()
    record(3, w < 1e-4 and covered and secs < 30, f"max rel err {w:.2e} at {name}, {secs:.1f}s")
    linf, row = check_sampler()
    record(4, linf < 0.01 and row <= 1e-9, f"L-inf {linf:.4f}, row-sum deviation {row:.1e}")
    fails, secs = check_coarsening()
    record(5, not fails and secs < 10, f"{len(fails)} violations, {secs:.2f}s")
    if quick:
        record(6, None, "skipped (--quick)")
        record(8, None, "skipped (--quick)")
    else:
        t0 = time.perf_counter()
        res = run_cross_validation(mutag_config())
        secs = time.perf_counter() - t0
        s = res.summary()
        record(6, s["mean"] >= 0.85 and secs < 1800, f"mean {100 * s['mean']:.2f}, {secs / 60:.1f} min")
        ratio = max(r.final_loss / r.first_loss for r in res.results)
        record(8, ratio < 0.5, f"worst loss ratio {ratio:.3f}")
    mean = None if quick else check_ptc()
    record(7, None if mean is None else mean >= 0.62,
           "PTC not run" if mean is None else f"mean {100 * mean:.2f}")
    with tempfile.TemporaryDirectory() as tmp:
        record(9, check_replay(tmp), "determinism replay")
    bad = check_equivariance()
    record(10, bad == 0, f"{bad} of 50 graphs differ")
    for n in sorted(RESULTS):
        print(RESULTS[n])
    return 0 if all("FAIL" not in line for line in RESULTS.values()) else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
