"""Minimal reverse-mode autodiff engine and the layers built on it."""

from . import functional
from .checkpoint import load_network, network_from_dict, network_to_dict, save_network
from .gradcheck import GradCheckReport, directional_grad_check, grad_check, input_grad_check
from .layers import L, LayerSpec, Sequential, build_sequential
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, no_grad, parameter

__all__ = [
    "functional", "Tensor", "no_grad", "parameter", "L", "LayerSpec", "Sequential",
    "build_sequential", "Adam", "AdamState", "adam_step", "grad_check", "directional_grad_check", "input_grad_check",
    "GradCheckReport", "save_network", "load_network", "network_to_dict", "network_from_dict",
]
