"""Differentiable-network core: dense nets, exact derivatives, Adam."""

from . import autodiff
from .autodiff import Var, gradients
from .checks import finite_diff_check, jacobian_check, loss_param_gradient
from .network import (
    ACTIVATIONS,
    NetworkSpec,
    ParameterVector,
    init_params,
    load_network,
    net_forward,
    net_forward_and_input_jacobian,
    net_input_jacobian,
    param_count,
    save_network,
)
from .optim import OptimizerState, adam_step

__all__ = [
    "autodiff",
    "Var",
    "gradients",
    "finite_diff_check",
    "jacobian_check",
    "loss_param_gradient",
    "ACTIVATIONS",
    "NetworkSpec",
    "ParameterVector",
    "init_params",
    "load_network",
    "net_forward",
    "net_forward_and_input_jacobian",
    "net_input_jacobian",
    "param_count",
    "save_network",
    "OptimizerState",
    "adam_step",
]
