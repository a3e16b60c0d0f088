"""The concrete primitive set used by the search.

Layer primitives build a LayerTree bottom-up, preprocessing primitives map a
DataPair to a DataPair, and NNLearner is the sole root primitive. Argument
slots carry a domain hint naming the sampling domain used for fresh values;
type checking itself only ever sees the closed SemType set.
"""

from __future__ import annotations

from .gptree import Domain, PrimitiveSet, SemType
from .layertree import ActivationKind, OptimizerKind, PaddingKind

STUB_TERMINALS = (("vgg_stub", 1), ("mobilenet_stub", 2), ("inception_stub", 3))


def build_primitive_set() -> PrimitiveSet:
    ps = PrimitiveSet("pipeline")

    # terminals
    ps.add_terminal("data", SemType.DATA_PAIR)
    ps.add_terminal("InputLayer", SemType.LAYER_UNIT, render_call=True)
    for kind in ActivationKind:
        ps.add_terminal(kind.value, SemType.ACTIVATION, value=kind)
    for kind in OptimizerKind:
        ps.add_terminal(kind.value, SemType.OPTIMIZER, value=kind)
    for kind in PaddingKind:
        ps.add_terminal(kind.value, SemType.PADDING, value=kind)
    for name, stub_id in STUB_TERMINALS:
        ps.add_terminal(name, SemType.INT, value=stub_id)

    # sampling domains (Int/Float ranges chosen for desk-scale search)
    ps.add_domain(Domain("units", SemType.INT, "choice_int", (4, 8, 16, 32, 64, 128)))
    ps.add_domain(Domain("kernel", SemType.INT, "choice_int", (1, 3, 5)))
    ps.add_domain(Domain("stride", SemType.INT, "choice_int", (1, 2)))
    ps.add_domain(Domain("batch", SemType.INT, "range_int", lo=1, hi=64))
    ps.add_domain(Domain("decay", SemType.FLOAT, "log_uniform", lo=1e-6, hi=1e-2))
    ps.add_domain(Domain("dropout_rate", SemType.FLOAT, "uniform", lo=0.05, hi=0.5))
    ps.add_domain(Domain("blur_sigma", SemType.FLOAT, "uniform", lo=0.3, hi=2.0))
    ps.add_domain(Domain("hist_bins", SemType.INT, "choice_int", (4, 8, 16, 32)))
    ps.add_domain(Domain("threshold", SemType.FLOAT, "uniform", lo=0.1, hi=0.9))
    ps.add_domain(Domain("activation", SemType.ACTIVATION, "terminals",
                         tuple(k.value for k in ActivationKind)))
    ps.add_domain(Domain("optimizer", SemType.OPTIMIZER, "terminals",
                         tuple(k.value for k in OptimizerKind)))
    ps.add_domain(Domain("padding", SemType.PADDING, "terminals",
                         tuple(k.value for k in PaddingKind)))
    ps.add_domain(Domain("stub", SemType.INT, "terminals",
                         tuple(name for name, _ in STUB_TERMINALS)))

    # layer primitives (LayerUnit -> LayerUnit)
    L = SemType.LAYER_UNIT
    ps.add_function("DenseLayer", (L, SemType.INT, SemType.ACTIVATION, SemType.FLOAT),
                    L, "layer", (None, "units", "activation", "decay"))
    ps.add_function("Conv2DLayer",
                    (L, SemType.INT, SemType.INT, SemType.INT, SemType.PADDING,
                     SemType.ACTIVATION, SemType.FLOAT),
                    L, "layer",
                    (None, "units", "kernel", "stride", "padding", "activation", "decay"))
    ps.add_function("DropoutLayer", (L, SemType.FLOAT), L, "layer", (None, "dropout_rate"))
    ps.add_function("BatchNormLayer", (L,), L, "layer")
    ps.add_function("MaxPool2DLayer", (L, SemType.INT, SemType.INT, SemType.PADDING),
                    L, "layer", (None, "kernel", "stride", "padding"))
    ps.add_function("GlobalMaxPoolLayer", (L,), L, "layer")
    ps.add_function("GlobalAvgPoolLayer", (L,), L, "layer")
    ps.add_function("ConcatenateLayer", (L, L), L, "layer")
    ps.add_function("PretrainedStub", (L, SemType.INT), L, "layer", (None, "stub"))

    # preprocessing primitives (DataPair -> DataPair)
    D = SemType.DATA_PAIR
    ps.add_function("CosineWindow", (D,), D, "preprocess")
    ps.add_function("Grayscale", (D,), D, "preprocess")
    ps.add_function("NormalizeChannels", (D,), D, "preprocess")
    ps.add_function("GaussianBlur", (D, SemType.FLOAT), D, "preprocess", (None, "blur_sigma"))
    ps.add_function("SobelEdges", (D,), D, "preprocess")
    ps.add_function("FourierMagnitude", (D,), D, "preprocess")
    ps.add_function("DctTransform", (D,), D, "preprocess")
    ps.add_function("IntensityHistogram", (D, SemType.INT), D, "preprocess",
                    (None, "hist_bins"))
    ps.add_function("ThresholdBinarize", (D, SemType.FLOAT), D, "preprocess",
                    (None, "threshold"))

    # the root learner
    ps.add_function("NNLearner", (D, L, SemType.OPTIMIZER, SemType.INT),
                    SemType.PREDICTIONS, "learner", (None, None, "optimizer", "batch"))
    return ps


def ephemeral_domains(pset: PrimitiveSet | None = None) -> dict[str, Domain]:
    """Table of every argument sampling domain, keyed by domain name."""
    if pset is None:
        pset = build_primitive_set()
    return pset.domains
