"""Pre-ordered list encoding of tree-shaped network graphs.

A ``LayerTree`` stores layer descriptors in pre-order with the root at index
0. Layer application is purely functional: applying a primitive returns a new
tree whose root is the new descriptor with the old root as its child.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional


class ActivationKind(enum.Enum):
    SELU = "selu"
    ELU = "elu"
    SIGMOID = "sigmoid"
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    SOFTMAX = "softmax"
    TANH = "tanh"


class OptimizerKind(enum.Enum):
    ADAM = "adam"
    SGD = "sgd"
    RMSPROP = "rmsprop"
    ADADELTA = "adadelta"
    ADAGRAD = "adagrad"
    ADAMAX = "adamax"
    NADAM = "nadam"
    FTRL = "ftrl"


class PaddingKind(enum.Enum):
    SAME = "same"
    VALID = "valid"


class LayerKind(enum.Enum):
    INPUT = "Input"
    DENSE = "Dense"
    CONV2D = "Conv2D"
    DROPOUT = "Dropout"
    BATCH_NORM = "BatchNorm"
    MAX_POOL2D = "MaxPool2D"
    GLOBAL_MAX_POOL = "GlobalMaxPool"
    GLOBAL_AVG_POOL = "GlobalAvgPool"
    CONCATENATE = "Concatenate"
    PRETRAINED_STUB = "PretrainedStub"


STUB_IDS = (1, 2, 3)  # stand-ins for three fixed pretrained backbones


class LayerTreeError(Exception):
    pass


class InvalidParams(LayerTreeError):
    def __init__(self, kind: LayerKind, field: str, message: str):
        self.kind = kind
        self.field = field
        super().__init__(f"{kind.value}.{field}: {message}")


@dataclass(frozen=True)
class LayerParams:
    """Per-layer hyper-parameters; fields irrelevant to a kind stay None."""

    output_dim: Optional[int] = None
    activation: Optional[ActivationKind] = None
    weight_decay: Optional[float] = None
    kernel_dim: Optional[int] = None
    stride: Optional[int] = None
    padding: Optional[PaddingKind] = None
    dropout_rate: Optional[float] = None
    stub_id: Optional[int] = None


_EMPTY = LayerParams()

_REQUIRED_FIELDS: dict[LayerKind, tuple[str, ...]] = {
    LayerKind.INPUT: (),
    LayerKind.DENSE: ("output_dim", "activation", "weight_decay"),
    LayerKind.CONV2D: ("output_dim", "kernel_dim", "stride", "padding",
                       "activation", "weight_decay"),
    LayerKind.DROPOUT: ("dropout_rate",),
    LayerKind.BATCH_NORM: (),
    LayerKind.MAX_POOL2D: ("kernel_dim", "stride", "padding"),
    LayerKind.GLOBAL_MAX_POOL: (),
    LayerKind.GLOBAL_AVG_POOL: (),
    LayerKind.CONCATENATE: (),
    LayerKind.PRETRAINED_STUB: ("stub_id",),
}

_ALL_FIELDS = tuple(LayerParams.__dataclass_fields__)


def child_count(kind: LayerKind) -> int:
    if kind is LayerKind.CONCATENATE:
        return 2
    if kind is LayerKind.INPUT:
        return 0
    return 1


def validate_params(kind: LayerKind, params: LayerParams) -> None:
    """Raise InvalidParams unless the params exactly fit the layer kind."""
    required = _REQUIRED_FIELDS[kind]
    for name in _ALL_FIELDS:
        value = getattr(params, name)
        if name in required:
            if value is None:
                raise InvalidParams(kind, name, "required field missing")
        elif value is not None:
            raise InvalidParams(kind, name, "field not applicable to this kind")
    if params.output_dim is not None and params.output_dim < 1:
        raise InvalidParams(kind, "output_dim", "must be >= 1")
    if params.kernel_dim is not None and params.kernel_dim < 1:
        raise InvalidParams(kind, "kernel_dim", "must be >= 1")
    if params.stride is not None and params.stride < 1:
        raise InvalidParams(kind, "stride", "must be >= 1")
    if params.weight_decay is not None and not (
            params.weight_decay >= 0 and math.isfinite(params.weight_decay)):
        raise InvalidParams(kind, "weight_decay", "must be finite and >= 0")
    if params.dropout_rate is not None and not 0.0 <= params.dropout_rate < 1.0:
        raise InvalidParams(kind, "dropout_rate", "must lie in [0, 1)")
    if params.activation is not None and not isinstance(params.activation, ActivationKind):
        raise InvalidParams(kind, "activation", "not an ActivationKind")
    if params.padding is not None and not isinstance(params.padding, PaddingKind):
        raise InvalidParams(kind, "padding", "not a PaddingKind")
    if params.stub_id is not None and params.stub_id not in STUB_IDS:
        raise InvalidParams(kind, "stub_id", f"must be one of {STUB_IDS}")


@dataclass(frozen=True)
class LayerDescriptor:
    kind: LayerKind
    params: LayerParams = _EMPTY
    child_indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class LayerTree:
    """Connected tree of descriptors stored as a pre-ordered list."""

    nodes: tuple[LayerDescriptor, ...]
    root_index: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> LayerDescriptor:
        return self.nodes[self.root_index]


def input_tree() -> LayerTree:
    return LayerTree((LayerDescriptor(LayerKind.INPUT),))


def _shift(nodes: tuple[LayerDescriptor, ...], offset: int) -> tuple[LayerDescriptor, ...]:
    return tuple(replace(d, child_indices=tuple(i + offset for i in d.child_indices))
                 for d in nodes)


def layer_apply(kind: LayerKind, tree: LayerTree, params: LayerParams = _EMPTY) -> LayerTree:
    """Stack a single-child layer on top of ``tree``; the input is untouched."""
    if child_count(kind) != 1:
        raise LayerTreeError(f"{kind.value} is not a single-child layer")
    validate_params(kind, params)
    new_root = LayerDescriptor(kind, params, (1,))
    return LayerTree((new_root,) + _shift(tree.nodes, 1))


def concat_apply(left: LayerTree, right: LayerTree) -> LayerTree:
    """Join two branches under a new Concatenate root."""
    offset_right = 1 + len(left.nodes)
    new_root = LayerDescriptor(LayerKind.CONCATENATE, _EMPTY, (1, offset_right))
    return LayerTree((new_root,) + _shift(left.nodes, 1)
                     + _shift(right.nodes, offset_right))


def preorder_indices(tree: LayerTree, start: Optional[int] = None) -> list[int]:
    """Recursive pre-order traversal, independent of list layout."""
    idx = tree.root_index if start is None else start
    out = [idx]
    for child in tree.nodes[idx].child_indices:
        out.extend(preorder_indices(tree, child))
    return out


def validate_layer_tree(tree: LayerTree) -> None:
    """Raise LayerTreeError unless the tree is connected, single-parented,
    pre-ordered, and every descriptor is internally valid."""
    n = len(tree.nodes)
    if not 0 <= tree.root_index < n:
        raise LayerTreeError("root index out of range")
    parents: dict[int, int] = {}
    for i, desc in enumerate(tree.nodes):
        if len(desc.child_indices) != child_count(desc.kind):
            raise LayerTreeError(
                f"{desc.kind.value} at {i} has {len(desc.child_indices)} children")
        validate_params(desc.kind, desc.params)
        for c in desc.child_indices:
            if not 0 <= c < n:
                raise LayerTreeError(f"child index {c} out of range at node {i}")
            if c in parents:
                raise LayerTreeError(f"node {c} has more than one parent")
            parents[c] = i
    if tree.root_index in parents:
        raise LayerTreeError("root has a parent")
    order = preorder_indices(tree)
    if len(order) != n:
        raise LayerTreeError("tree is not connected")
    if order != list(range(n)) or tree.root_index != 0:
        raise LayerTreeError("node list is not in pre-order from the root")
