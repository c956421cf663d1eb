"""Small convolutional-network engine on float64 numpy arrays."""

from .network import (ForwardRecord, LayerSpec, NetworkSpec, Op, Parameters, TrainingDiverged,
                      backward, dropout, forward, init_parameters, loss_grad, loss_value,
                      maxpool, relu, sgd_step, sigmoid, softmax)
from .weights import WeightFileError, load_matrix, load_weights, save_matrix, save_weights

__all__ = [
    "ForwardRecord", "LayerSpec", "NetworkSpec", "Op", "Parameters", "TrainingDiverged",
    "backward", "dropout", "forward", "init_parameters", "loss_grad", "loss_value", "maxpool",
    "relu", "sgd_step", "sigmoid", "softmax", "WeightFileError", "load_matrix",
    "load_weights", "save_matrix", "save_weights",
]
