"""Shape-checked compilation of a LayerTree into a trainable network.

Compilation walks the descriptor tree bottom-up, checks every edge's shape,
inserts a flattening adapter in front of dense layers fed spatial tensors,
and guarantees the executed plan ends in a softmax so the forward pass always
emits per-class probabilities. A classification head (dense layer sized to
the class count) is appended when the tree's own root does not provide one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..layertree import (ActivationKind, LayerKind, LayerTree, PaddingKind,
                         validate_layer_tree)
from ..pretrained import STUB_INPUT_CHANNELS, StubStore
from .ops import (ActivationOp, BatchNormOp, ConcatOp, Conv2DOp, DenseOp,
                  DropoutOp, FlattenOp, GlobalAvgPoolOp, GlobalMaxPoolOp,
                  MaxPool2DOp, Op, conv_spatial_geometry)


class CompileError(Exception):
    def __init__(self, path: int, expected: str, actual: str, message: str = ""):
        self.path = path
        self.expected = expected
        self.actual = actual
        detail = message or "shape contradiction"
        super().__init__(f"node {path}: {detail} (expected {expected}, got {actual})")


class ShapeMismatch(Exception):
    pass


@dataclass
class PlanNode:
    op: Optional[Op]  # None marks the batch input placeholder
    inputs: tuple[int, ...]
    shape: tuple[int, ...]  # per-instance shape
    label: str


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy from logits; returns (loss, probs, dlogits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(log_probs[np.arange(n), labels].mean())
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits.astype(logits.dtype)


class NetworkGraph:
    """Compiled execution plan plus parameter tensors."""

    def __init__(self, nodes: list[PlanNode], input_shape, n_classes: int, dtype):
        self.nodes = nodes
        self.input_shape = tuple(input_shape)
        self.n_classes = n_classes
        self.dtype = dtype

    # -- parameters ---------------------------------------------------------

    def param_items(self):
        for node in self.nodes:
            if node.op is None:
                continue
            for name in node.op.params:
                yield node.op, name

    def trainable_arrays(self) -> list[np.ndarray]:
        return [op.params[name] for op, name in self.param_items()]

    @property
    def param_count(self) -> int:
        return int(sum(a.size for a in self.trainable_arrays()))

    def get_state(self) -> list[np.ndarray]:
        snap = []
        for node in self.nodes:
            if node.op is None:
                continue
            for name in node.op.params:
                snap.append(node.op.params[name].copy())
            for name in node.op.state:
                snap.append(node.op.state[name].copy())
        return snap

    def set_state(self, snapshot: list[np.ndarray]) -> None:
        it = iter(snapshot)
        for node in self.nodes:
            if node.op is None:
                continue
            for name in node.op.params:
                node.op.params[name][...] = next(it)
            for name in node.op.state:
                node.op.state[name][...] = next(it)

    # -- execution ------------------------------------------------------------

    def _run(self, x: np.ndarray, training: bool, rng) -> list[np.ndarray]:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatch(
                f"batch instances have shape {tuple(x.shape[1:])}, "
                f"network expects {self.input_shape}")
        values: list[Optional[np.ndarray]] = [None] * len(self.nodes)
        values[0] = x.astype(self.dtype, copy=False)
        for i, node in enumerate(self.nodes):
            if node.op is None:
                continue
            xs = [values[j] for j in node.inputs]
            values[i] = node.op.forward(xs, training, rng)
        return values

    def forward(self, x: np.ndarray, training: bool = False, rng=None) -> np.ndarray:
        """Per-class probabilities for a batch; rows sum to 1."""
        return self._run(x, training, rng)[-1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).argmax(axis=1)

    def decay_loss(self) -> float:
        return sum(node.op.decay_loss() for node in self.nodes if node.op is not None)

    def loss(self, x: np.ndarray, y: np.ndarray, training: bool = False, rng=None) -> float:
        values = self._run(x, training, rng)
        logits = values[self.nodes[-1].inputs[0]]
        loss, _, _ = softmax_cross_entropy(logits, y)
        return loss + self.decay_loss()

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, rng=None):
        """Training-mode loss and gradients for every trainable tensor.

        The final softmax is fused with the cross-entropy loss, so the
        backward pass starts from the logits.
        """
        values = self._run(x, training=True, rng=rng)
        head = self.nodes[-1]
        logits_idx = head.inputs[0]
        loss, _, dlogits = softmax_cross_entropy(values[logits_idx], y)
        loss += self.decay_loss()

        grad_buf: dict[int, np.ndarray] = {logits_idx: dlogits}
        for i in range(len(self.nodes) - 2, 0, -1):
            g = grad_buf.pop(i, None)
            if g is None:
                continue
            gxs = self.nodes[i].op.backward(g)
            for j, gx in zip(self.nodes[i].inputs, gxs):
                if j == 0:
                    continue
                if j in grad_buf:
                    grad_buf[j] = grad_buf[j] + gx
                else:
                    grad_buf[j] = gx
        grads = [op.grads[name] for op, name in self.param_items()]
        return loss, grads

    def weight_tensors(self) -> list[np.ndarray]:
        """All persistent tensors (trainable + running stats) for dumps."""
        return self.get_state()


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def compile_network(layers: LayerTree, input_shape, n_classes: int, seed: int,
                    stub_store: Optional[StubStore] = None,
                    dtype=np.float32) -> NetworkGraph:
    """Compile a LayerTree into a NetworkGraph.

    Raises CompileError for any shape contradiction; parameter initialization
    is deterministic given ``seed``.
    """
    validate_layer_tree(layers)
    input_shape = tuple(int(v) for v in input_shape)
    if len(input_shape) not in (1, 3):
        raise CompileError(layers.root_index, "(H, W, C) or (D,)",
                           str(input_shape), "unsupported input rank")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    store = stub_store if stub_store is not None else StubStore()
    nodes: list[PlanNode] = [PlanNode(None, (), input_shape, "input")]

    def add(op: Op, inputs: tuple[int, ...], shape, label: str) -> int:
        nodes.append(PlanNode(op, inputs, tuple(shape), label))
        return len(nodes) - 1

    def ensure_flat(idx: int, shape) -> tuple[int, tuple]:
        if len(shape) == 1:
            return idx, shape
        flat = (int(np.prod(shape)),)
        return add(FlattenOp(), (idx,), flat, "flatten"), flat

    def add_conv(idx, shape, path, filters, kernel, stride, padding, decay,
                 weights=None) -> tuple[int, tuple]:
        h, w, c = shape
        try:
            oh, pad_h = conv_spatial_geometry(h, kernel, stride, padding)
            ow, pad_w = conv_spatial_geometry(w, kernel, stride, padding)
        except ValueError as exc:
            raise CompileError(path, f"spatial dims fitting {kernel}x{kernel}/{stride}",
                               f"{h}x{w}", str(exc)) from None
        if weights is None:
            kw = _glorot(rng, (kernel, kernel, c, filters),
                         kernel * kernel * c, kernel * kernel * filters, dtype)
            kb = np.zeros(filters, dtype=dtype)
        else:
            kw, kb = (t.astype(dtype) for t in weights)
        op = Conv2DOp(kw, kb, stride, (pad_h, pad_w), (oh, ow), decay)
        return add(op, (idx,), (oh, ow, filters), "conv2d"), (oh, ow, filters)

    def add_pool(idx, shape, path, kernel, stride, padding) -> tuple[int, tuple]:
        h, w, c = shape
        try:
            oh, pad_h = conv_spatial_geometry(h, kernel, stride, padding)
            ow, pad_w = conv_spatial_geometry(w, kernel, stride, padding)
        except ValueError as exc:
            raise CompileError(path, f"spatial dims fitting {kernel}x{kernel}/{stride}",
                               f"{h}x{w}", str(exc)) from None
        op = MaxPool2DOp(kernel, stride, (pad_h, pad_w), (oh, ow))
        return add(op, (idx,), (oh, ow, c), "max_pool"), (oh, ow, c)

    def require_spatial(shape, path, what):
        if len(shape) != 3:
            raise CompileError(path, "spatial input (H, W, C)", str(shape),
                               f"{what} needs image-shaped input")

    def build(desc_idx: int) -> tuple[int, tuple]:
        desc = layers.nodes[desc_idx]
        kind = desc.kind
        p = desc.params
        if kind is LayerKind.INPUT:
            return 0, input_shape
        child_results = [build(c) for c in desc.child_indices]
        idx, shape = child_results[0]

        if kind is LayerKind.DENSE:
            idx, shape = ensure_flat(idx, shape)
            w = _glorot(rng, (shape[0], p.output_dim), shape[0], p.output_dim, dtype)
            b = np.zeros(p.output_dim, dtype=dtype)
            idx = add(DenseOp(w, b, p.weight_decay), (idx,), (p.output_dim,), "dense")
            idx = add(ActivationOp(p.activation), (idx,), (p.output_dim,),
                      f"act:{p.activation.value}")
            return idx, (p.output_dim,)

        if kind is LayerKind.CONV2D:
            require_spatial(shape, desc_idx, "Conv2D")
            idx, shape = add_conv(idx, shape, desc_idx, p.output_dim, p.kernel_dim,
                                  p.stride, p.padding, p.weight_decay)
            idx = add(ActivationOp(p.activation), (idx,), shape,
                      f"act:{p.activation.value}")
            return idx, shape

        if kind is LayerKind.DROPOUT:
            return add(DropoutOp(p.dropout_rate), (idx,), shape, "dropout"), shape

        if kind is LayerKind.BATCH_NORM:
            width = shape[-1]
            op = BatchNormOp(np.ones(width, dtype=dtype), np.zeros(width, dtype=dtype))
            return add(op, (idx,), shape, "batch_norm"), shape

        if kind is LayerKind.MAX_POOL2D:
            require_spatial(shape, desc_idx, "MaxPool2D")
            return add_pool(idx, shape, desc_idx, p.kernel_dim, p.stride, p.padding)

        if kind is LayerKind.GLOBAL_MAX_POOL:
            require_spatial(shape, desc_idx, "GlobalMaxPool")
            return add(GlobalMaxPoolOp(), (idx,), (shape[2],), "global_max"), (shape[2],)

        if kind is LayerKind.GLOBAL_AVG_POOL:
            require_spatial(shape, desc_idx, "GlobalAvgPool")
            return add(GlobalAvgPoolOp(), (idx,), (shape[2],), "global_avg"), (shape[2],)

        if kind is LayerKind.CONCATENATE:
            (li, ls), (ri, rs) = child_results
            if len(ls) == 1 and len(rs) == 1:
                out = (ls[0] + rs[0],)
                return add(ConcatOp(ls[0], rs[0]), (li, ri), out, "concat"), out
            if len(ls) == 3 and len(rs) == 3 and ls[:2] == rs[:2]:
                out = (ls[0], ls[1], ls[2] + rs[2])
                return add(ConcatOp(ls[2], rs[2]), (li, ri), out, "concat"), out
            raise CompileError(desc_idx, "matching flat or spatial branch shapes",
                               f"{ls} vs {rs}", "cannot concatenate branches")

        if kind is LayerKind.PRETRAINED_STUB:
            require_spatial(shape, desc_idx, "PretrainedStub")
            if shape[2] != STUB_INPUT_CHANNELS:
                raise CompileError(desc_idx, f"{STUB_INPUT_CHANNELS} input channels",
                                   str(shape[2]), "stub backbone expects RGB input")
            w1, b1, w2, b2 = store.tensors(p.stub_id)
            idx, shape = add_conv(idx, shape, desc_idx, w1.shape[3], 3, 1,
                                  PaddingKind.SAME, 0.0, weights=(w1, b1))
            idx = add(ActivationOp(ActivationKind.RELU), (idx,), shape, "act:relu")
            idx, shape = add_pool(idx, shape, desc_idx, 2, 2, PaddingKind.SAME)
            idx, shape = add_conv(idx, shape, desc_idx, w2.shape[3], 3, 1,
                                  PaddingKind.SAME, 0.0, weights=(w2, b2))
            idx = add(ActivationOp(ActivationKind.RELU), (idx,), shape, "act:relu")
            return add_pool(idx, shape, desc_idx, 2, 2, PaddingKind.SAME)

        raise CompileError(desc_idx, "a known layer kind", kind.value)

    idx, shape = build(layers.root_index)

    # classification head: flat logits sized to the class count, then softmax
    idx, shape = ensure_flat(idx, shape)
    if shape[0] != n_classes:
        w = _glorot(rng, (shape[0], n_classes), shape[0], n_classes, dtype)
        b = np.zeros(n_classes, dtype=dtype)
        idx = add(DenseOp(w, b, 0.0), (idx,), (n_classes,), "head")
        shape = (n_classes,)
    last = nodes[idx]
    if not (isinstance(last.op, ActivationOp) and last.op.kind is ActivationKind.SOFTMAX):
        idx = add(ActivationOp(ActivationKind.SOFTMAX), (idx,), shape, "softmax")
    return NetworkGraph(nodes, input_shape, n_classes, dtype)
