import numpy as np
import pytest

from neurevo.layertree import (ActivationKind, LayerKind, LayerParams,
                               PaddingKind, concat_apply, input_tree, layer_apply)
from neurevo.nn.graph import (CompileError, ShapeMismatch, compile_network,
                              softmax_cross_entropy)
from neurevo.pretrained import StubStore, read_checkpoint, write_checkpoint


def conv_params(filters=4, k=3, s=1, padding=PaddingKind.SAME):
    return LayerParams(output_dim=filters, kernel_dim=k, stride=s, padding=padding,
                       activation=ActivationKind.RELU, weight_decay=0.0)


def dense_params(units, act=ActivationKind.RELU, decay=0.0):
    return LayerParams(output_dim=units, activation=act, weight_decay=decay)


def shape_after(tree, input_shape, n_classes=2):
    net = compile_network(tree, input_shape, n_classes, seed=0)
    return net


def test_conv_same_preserves_spatial():
    tree = layer_apply(LayerKind.CONV2D, input_tree(), conv_params())
    net = compile_network(tree, (8, 8, 3), 2, seed=0)
    conv_node = next(n for n in net.nodes if n.label == "conv2d")
    assert conv_node.shape == (8, 8, 4)


def test_conv_valid_shrinks():
    tree = layer_apply(LayerKind.CONV2D, input_tree(),
                       conv_params(padding=PaddingKind.VALID))
    net = compile_network(tree, (8, 8, 3), 2, seed=0)
    conv_node = next(n for n in net.nodes if n.label == "conv2d")
    assert conv_node.shape == (6, 6, 4)  # floor((8-3)/1)+1


def test_dense_param_count_example():
    # flat 10 -> Dense 5 (55 params) -> appended head 5->2 (12 params)
    tree = layer_apply(LayerKind.DENSE, input_tree(), dense_params(5))
    net = compile_network(tree, (10,), 2, seed=0)
    assert net.param_count == 67


def test_pool_of_tiny_map_valid_fails():
    tree = layer_apply(LayerKind.GLOBAL_AVG_POOL, input_tree())
    tree = layer_apply(LayerKind.MAX_POOL2D, input_tree(),
                       LayerParams(kernel_dim=2, stride=2,
                                   padding=PaddingKind.VALID))
    with pytest.raises(CompileError):
        compile_network(tree, (1, 1, 3), 2, seed=0)


def test_spatial_layer_on_flat_input_fails():
    tree = layer_apply(LayerKind.CONV2D, input_tree(), conv_params())
    with pytest.raises(CompileError):
        compile_network(tree, (12,), 2, seed=0)


def test_concat_mismatched_branches_fail():
    left = layer_apply(LayerKind.MAX_POOL2D, input_tree(),
                       LayerParams(kernel_dim=2, stride=2, padding=PaddingKind.SAME))
    tree = concat_apply(left, input_tree())
    with pytest.raises(CompileError):
        compile_network(tree, (8, 8, 3), 2, seed=0)


def test_concat_spatial_channels_add():
    left = layer_apply(LayerKind.CONV2D, input_tree(), conv_params(filters=4))
    right = layer_apply(LayerKind.CONV2D, input_tree(), conv_params(filters=5))
    tree = concat_apply(left, right)
    net = compile_network(tree, (8, 8, 3), 2, seed=0)
    concat_node = next(n for n in net.nodes if n.label == "concat")
    assert concat_node.shape == (8, 8, 9)


def test_stub_rejects_non_rgb():
    tree = layer_apply(LayerKind.PRETRAINED_STUB, input_tree(), LayerParams(stub_id=1))
    with pytest.raises(CompileError):
        compile_network(tree, (8, 8, 1), 2, seed=0)


def test_stub_shapes_and_trainable():
    tree = layer_apply(LayerKind.PRETRAINED_STUB, input_tree(), LayerParams(stub_id=2))
    net = compile_network(tree, (8, 8, 3), 2, seed=0)
    pools = [n for n in net.nodes if n.label == "max_pool"]
    assert pools[-1].shape == (2, 2, 16)
    # stub weights are trainable parameters
    assert net.param_count > 16 * 2 * 2


def test_forward_rows_sum_to_one():
    rng = np.random.default_rng(0)
    tree = layer_apply(LayerKind.DENSE, input_tree(), dense_params(7))
    net = compile_network(tree, (5,), 3, seed=1)
    probs = net.forward(rng.random((11, 5)).astype(np.float32))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_sigmoid_head_gets_softmax_normalization():
    # a dense root already sized to the class count keeps its sigmoid and only
    # gains a softmax on top
    tree = layer_apply(LayerKind.DENSE, input_tree(),
                       dense_params(2, act=ActivationKind.SIGMOID))
    net = compile_network(tree, (6,), 2, seed=0)
    labels = [n.label for n in net.nodes]
    assert labels[-1] == "softmax"
    assert labels.count("dense") == 1 and "head" not in labels
    probs = net.forward(np.random.default_rng(1).random((4, 6)).astype(np.float32))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_softmax_root_head_not_duplicated():
    tree = layer_apply(LayerKind.DENSE, input_tree(),
                       dense_params(3, act=ActivationKind.SOFTMAX))
    net = compile_network(tree, (6,), 3, seed=0)
    assert [n.label for n in net.nodes].count("softmax") == 0
    assert net.nodes[-1].label == "act:softmax"


def test_dropout_inference_is_identity():
    tree = layer_apply(LayerKind.DROPOUT, input_tree(), LayerParams(dropout_rate=0.5))
    net = compile_network(tree, (9,), 2, seed=0)
    x = np.random.default_rng(2).random((6, 9)).astype(np.float32)
    a = net.forward(x)
    b = net.forward(x)
    assert np.array_equal(a, b)
    drop = next(n.op for n in net.nodes if n.label == "dropout")
    out = drop.forward([x], training=False, rng=None)
    assert np.array_equal(out, x)


def test_batchnorm_constant_batch_centers():
    tree = layer_apply(LayerKind.BATCH_NORM, input_tree())
    net = compile_network(tree, (4,), 2, seed=0)
    bn = next(n.op for n in net.nodes if n.label == "batch_norm")
    x = np.full((8, 4), 3.7, dtype=np.float32)
    out = bn.forward([x], training=True, rng=None)
    assert np.allclose(out, 0.0, atol=1e-4)


def test_forward_shape_mismatch():
    tree = layer_apply(LayerKind.DENSE, input_tree(), dense_params(4))
    net = compile_network(tree, (5,), 2, seed=0)
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((3, 6), dtype=np.float32))


def test_uniform_prediction_loss_is_log_k():
    for k in (2, 5, 10):
        logits = np.zeros((7, k))
        labels = np.arange(7) % k
        loss, probs, _ = softmax_cross_entropy(logits, labels)
        assert np.isclose(loss, np.log(k), atol=1e-12)
        assert np.allclose(probs, 1.0 / k)


def test_compile_deterministic():
    tree = layer_apply(LayerKind.CONV2D, input_tree(), conv_params())
    a = compile_network(tree, (8, 8, 3), 2, seed=9)
    b = compile_network(tree, (8, 8, 3), 2, seed=9)
    x = np.random.default_rng(3).random((4, 8, 8, 3)).astype(np.float32)
    assert np.array_equal(a.forward(x), b.forward(x))


def test_weight_dump_roundtrip(tmp_path):
    tree = layer_apply(LayerKind.DENSE, input_tree(), dense_params(5))
    net = compile_network(tree, (10,), 2, seed=4)
    tensors = net.weight_tensors()
    path = tmp_path / "model.bin"
    write_checkpoint(path, tensors)
    loaded = read_checkpoint(path)
    net.set_state(loaded)
    for a, b in zip(net.weight_tensors(), tensors):
        assert np.allclose(a, b, atol=1e-7)


def test_stub_store_file_roundtrip(tmp_path):
    mem = StubStore()
    disk = StubStore(str(tmp_path))
    for sid in (1, 2, 3):
        for a, b in zip(mem.tensors(sid), disk.tensors(sid)):
            assert np.array_equal(a, b)
    assert (tmp_path / "stub_1.bin").exists()
