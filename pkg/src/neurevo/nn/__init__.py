from .graph import CompileError, NetworkGraph, compile_network, softmax_cross_entropy
from .optim import DEFAULT_LEARNING_RATES, Optimizer
from .train import TrainConfig, TrainReport, evaluate_objectives, train

__all__ = [
    "CompileError",
    "NetworkGraph",
    "compile_network",
    "softmax_cross_entropy",
    "Optimizer",
    "DEFAULT_LEARNING_RATES",
    "TrainConfig",
    "TrainReport",
    "train",
    "evaluate_objectives",
]
