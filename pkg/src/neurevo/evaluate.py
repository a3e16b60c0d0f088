"""End-to-end evaluation of one candidate tree.

Child nodes run before their parents: preprocessing nodes rewrite the
DataPair, layer nodes grow a LayerTree, and the NNLearner root compiles the
network, trains it with early stopping, and scores the test split. Failures
never escape: they map onto a status plus sentinel objectives.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import preprocess as pp
from .gptree import SemType, TreeNode
from .layertree import (InvalidParams, LayerKind, LayerParams, LayerTree,
                        LayerTreeError, OptimizerKind, concat_apply, input_tree,
                        layer_apply)
from .nn.graph import CompileError, NetworkGraph, compile_network
from .nn.train import (TrainConfig, TrainReport, _batched_predict,
                       evaluate_objectives, train)
from .objectives import ObjectiveVector, sentinel_objectives
from .pretrained import StubStore

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_TIMEOUT = "timeout"
STATUS_DIVERGED = "diverged"
STATUS_COMPILE_ERROR = "compile_error"


@dataclass(frozen=True)
class EvalSettings:
    """Fixed per-run training knobs that are not part of the genome."""

    patience: int = 5
    max_epochs: int = 30
    lr: Optional[float] = None
    sentinel_params: float = 10_000_000.0
    dtype: str = "float32"


@dataclass
class EvalOutcome:
    status: str
    objectives: ObjectiveVector
    report: Optional[TrainReport] = None
    message: str = ""
    wall_time: float = 0.0


_PRE_FUNCS = {
    "CosineWindow": pp.cosine_window,
    "Grayscale": pp.grayscale,
    "NormalizeChannels": pp.normalize_fit_apply,
    "GaussianBlur": pp.gaussian_blur,
    "SobelEdges": pp.sobel_edges,
    "FourierMagnitude": pp.fourier_magnitude,
    "DctTransform": pp.dct_transform,
    "IntensityHistogram": pp.intensity_histogram,
    "ThresholdBinarize": pp.threshold_binarize,
}

_LAYER_SPECS = {
    "DenseLayer": (LayerKind.DENSE, ("output_dim", "activation", "weight_decay")),
    "Conv2DLayer": (LayerKind.CONV2D, ("output_dim", "kernel_dim", "stride",
                                       "padding", "activation", "weight_decay")),
    "DropoutLayer": (LayerKind.DROPOUT, ("dropout_rate",)),
    "BatchNormLayer": (LayerKind.BATCH_NORM, ()),
    "MaxPool2DLayer": (LayerKind.MAX_POOL2D, ("kernel_dim", "stride", "padding")),
    "GlobalMaxPoolLayer": (LayerKind.GLOBAL_MAX_POOL, ()),
    "GlobalAvgPoolLayer": (LayerKind.GLOBAL_AVG_POOL, ()),
    "ConcatenateLayer": (LayerKind.CONCATENATE, ()),
    "PretrainedStub": (LayerKind.PRETRAINED_STUB, ("stub_id",)),
}


def eval_node(node: TreeNode, dataset: pp.DataPair):
    """Evaluate any non-learner subtree to its runtime value."""
    spec = node.primitive
    if spec.kind == "ephemeral":
        return node.ephemeral_value
    if spec.kind == "terminal":
        if spec.name == "data":
            return dataset
        if spec.name == "InputLayer":
            return input_tree()
        return spec.value
    if spec.name in _PRE_FUNCS:
        args = [eval_node(c, dataset) for c in node.children]
        return _PRE_FUNCS[spec.name](*args)
    if spec.name in _LAYER_SPECS:
        kind, fields = _LAYER_SPECS[spec.name]
        args = [eval_node(c, dataset) for c in node.children]
        if kind is LayerKind.CONCATENATE:
            return concat_apply(args[0], args[1])
        params = LayerParams(**dict(zip(fields, args[1:])))
        return layer_apply(kind, args[0], params)
    raise LayerTreeError(f"primitive {spec.name!r} has no evaluator")


def nnlearner(dataset: pp.DataPair, layers: LayerTree, optimizer: OptimizerKind,
              batch_size: int, settings: EvalSettings, seed: int,
              stub_store: Optional[StubStore] = None,
              deadline: Optional[float] = None):
    """Compile, train with early stopping, and score one network.

    Returns (predictions, objectives, report, net); identical arguments give
    bit-identical predictions and objectives.
    """
    if batch_size < 1:
        raise InvalidParams(LayerKind.INPUT, "batch_size", "must be >= 1")
    dtype = np.float64 if settings.dtype == "float64" else np.float32
    shape = dataset.instance_shape
    net = compile_network(layers, shape, dataset.n_classes, seed,
                          stub_store=stub_store, dtype=dtype)
    cfg = TrainConfig(batch_size=batch_size, optimizer=optimizer,
                      patience=settings.patience, max_epochs=settings.max_epochs,
                      lr=settings.lr)
    report = train(net, dataset, cfg, seed, deadline=deadline)
    if report.diverged or report.timed_out:
        return None, None, report, net
    objectives = evaluate_objectives(net, dataset)
    preds = _batched_predict(net, dataset.test.x)
    return preds, objectives, report, net


def evaluate_individual(root: TreeNode, dataset: pp.DataPair,
                        settings: EvalSettings, seed: int,
                        stub_store: Optional[StubStore] = None,
                        timeout: Optional[float] = None) -> EvalOutcome:
    """Run the whole pipeline for one tree, mapping failures to statuses."""
    started = time.monotonic()
    deadline = started + timeout if timeout else None
    sentinel = sentinel_objectives(settings.sentinel_params)
    spec = root.primitive
    try:
        if spec.name != "NNLearner" or spec.output_type is not SemType.PREDICTIONS:
            raise LayerTreeError("tree root must be an NNLearner")
        data = eval_node(root.children[0], dataset)
        layers = eval_node(root.children[1], dataset)
        optimizer = eval_node(root.children[2], dataset)
        batch = eval_node(root.children[3], dataset)
        _, objectives, report, _ = nnlearner(
            data, layers, optimizer, batch, settings, seed,
            stub_store=stub_store, deadline=deadline)
    except (pp.PreprocessError, InvalidParams, LayerTreeError, CompileError) as exc:
        return EvalOutcome(STATUS_COMPILE_ERROR, sentinel, message=str(exc),
                           wall_time=time.monotonic() - started)
    except Exception as exc:  # pragma: no cover - isolation net for worker safety
        logger.warning("unexpected evaluation failure: %s", exc)
        return EvalOutcome(STATUS_COMPILE_ERROR, sentinel, message=repr(exc),
                           wall_time=time.monotonic() - started)
    wall = time.monotonic() - started
    if report.diverged:
        return EvalOutcome(STATUS_DIVERGED, sentinel, report, "loss went non-finite", wall)
    if report.timed_out:
        return EvalOutcome(STATUS_TIMEOUT, sentinel, report, "timed out between epochs", wall)
    return EvalOutcome(STATUS_OK, objectives, report, "", wall)
