"""Dense-vector math, reverse-mode autodiff, small MLPs and optimizers."""

from .autodiff import Tape, Tensor, clip, concat, finite_difference, grad, logistic, value_and_grad
from .mlp import MLP, input_gradient, mlp_forward
from .optim import Adam, optimizer_step
from .serialize import dumps_params, load_params, loads_params, save_params

__all__ = [
    "Adam",
    "MLP",
    "Tape",
    "Tensor",
    "clip",
    "concat",
    "dumps_params",
    "finite_difference",
    "grad",
    "input_gradient",
    "load_params",
    "loads_params",
    "logistic",
    "mlp_forward",
    "optimizer_step",
    "save_params",
    "value_and_grad",
]
