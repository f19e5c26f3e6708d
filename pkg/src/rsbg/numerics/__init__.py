from . import tensor as ops
from .nn import ParamStore, linear, lstm_cell, run_lstm
from .optim import SGD, Adam, OptimizerState, TrainingError, make_optimizer
from .tensor import ShapeError, Tensor

__all__ = [
    "Adam",
    "OptimizerState",
    "ParamStore",
    "SGD",
    "ShapeError",
    "Tensor",
    "TrainingError",
    "linear",
    "lstm_cell",
    "make_optimizer",
    "ops",
    "run_lstm",
]
