import numpy as np
import pytest

from helpers import central_diff, random_graph, rel_err
from wsc.batch import GraphBatch
from wsc.exceptions import ArchitectureParseError
from wsc.model import WSCNetwork, parse_architecture
from wsc.nn import softmax_cross_entropy

MUTAG_ARCH = "C(64)-P(0.25)-C(128)-P(0.0)-FC(256)"
SEVEN = "C(64)-P(0.25)-C(128)-P(0.25)-C(256)-P(0.0)-FC(256)"


def test_parse_five_layers():
    spec = parse_architecture(MUTAG_ARCH)
    assert len(spec) == 5
    assert spec.conv_widths == [64, 128]
    assert spec.pool_ratios == [0.25, 0.0]
    assert spec.fc_width == 256
    assert str(spec) == MUTAG_ARCH


def test_parse_seven_layer_bookkeeping():
    spec = parse_architecture(SEVEN)
    assert spec.conv_widths == [64, 128, 256]
    assert spec.vertex_counts(16) == [16, 4, 4, 1, 1, 1, 1]
    assert spec.vertex_counts(18) == [18, 5, 5, 1, 1, 1, 1]


def test_parse_fc_only():
    spec = parse_architecture("FC(256)")
    assert len(spec) == 1 and spec.body == ()


@pytest.mark.parametrize("text", [
    "C(64)-C(64)",
    "C(64)-P(0.25)-C(8)-P(0.0)",
    "P(0.5)-C(4)-P(0.0)-FC(8)",
    "C(64)-P(1.0)-C(8)-P(0.0)-FC(8)",
    "C(64)-P(0.0)-C(8)-P(0.0)-FC(8)",
    "C(64)-P(0.5)-C(8)-P(0.5)-FC(8)",
    "C(x)-P(0.0)-FC(8)",
    "C(0)-P(0.0)-FC(8)",
    "C(4)-P(0.0)-FC(8)-FC(2)",
    "",
])
def test_parse_errors(text):
    with pytest.raises(ArchitectureParseError):
        parse_architecture(text)


def test_parse_error_position():
    with pytest.raises(ArchitectureParseError) as info:
        parse_architecture("C(64)-Q(3)-FC(8)")
    assert info.value.position == 6


def tiny_net(seed=0, arch="C(4)-P(0.5)-C(6)-P(0.0)-FC(8)", d=3):
    return WSCNetwork(arch, d, 2, T=3, C=2, K=3, dropout=0.5, seed=seed)


def test_logits_shape(rng):
    net = tiny_net()
    batch = GraphBatch.from_graphs([random_graph(rng, m, 3, connected=True) for m in (5, 7, 9)])
    assert net.forward(batch).shape == (3, 2)
    names = [p.name for p in net.parameters]
    assert len(names) == len(set(names))


def test_fc_only_zero_weights_uniform(rng):
    net = WSCNetwork("FC(16)", 3, 4, seed=0)
    for p in net.parameters:
        p.value[...] = 0
    logits = net.forward(GraphBatch.from_graphs([random_graph(rng, 6, 3)]))
    np.testing.assert_array_equal(logits, 0)


def test_evaluation_repeatable(rng):
    net = tiny_net()
    batch = GraphBatch.from_graphs([random_graph(rng, m, 3, connected=True) for m in (5, 8)])
    a = net.forward(batch, walk_rng_keys=(4, 2))
    b = net.forward(batch, walk_rng_keys=(4, 2))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, net.forward(batch, walk_rng_keys=(4, 3)))


def test_same_seed_same_weights():
    a, b = tiny_net(5), tiny_net(5)
    for p, q in zip(a.parameters, b.parameters):
        np.testing.assert_array_equal(p.value, q.value)


def test_full_model_gradient_check():
    rng = np.random.default_rng(2)
    net = tiny_net(1)
    batch = GraphBatch.from_graphs([random_graph(rng, m, 3, connected=True) for m in (5, 6)])
    labels = np.array([0, 1])
    keys = (9,)
    drop = 123

    def obj():
        logits = net.forward(batch, training=True, walk_rng_keys=keys,
                             dropout_rng=np.random.default_rng(drop))
        return softmax_cross_entropy(logits, labels)[0]

    net.zero_grad()
    logits = net.forward(batch, training=True, walk_rng_keys=keys, dropout_rng=np.random.default_rng(drop))
    net.backward(softmax_cross_entropy(logits, labels)[1])
    grads = {p.name: p.grad.copy() for p in net.parameters}
    for p in net.parameters:
        assert rel_err(grads[p.name], central_diff(obj, p.value, 1e-6)) < 1e-4, p.name


def test_walk_fields_follow_coarse_graph(rng):
    net = tiny_net()
    batch = GraphBatch.from_graphs([random_graph(rng, 8, 3, connected=True)])
    net.forward(batch)
    fields, shape = net.body[2]._cache[1], net.body[2]._cache[0]
    assert shape[0] == 4
    assert all(p.max() < 4 for p in fields.values())
