"""Layer specs, layer objects and the sequential container.

A network is described by a list of :class:`LayerSpec` records and realised
with :func:`build_sequential`, which threads the per-sample input shape
through every layer so parameter shapes are known up front.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import InvalidParams, ShapeMismatch
from . import functional as F
from .tensor import Tensor, parameter

KINDS = (
    "dense", "conv1d", "conv_transpose1d", "maxpool1d", "upsample1d",
    "adaptive_avg_pool1d", "batchnorm1d", "dropout", "relu", "leaky_relu",
    "sigmoid", "tanh", "flatten", "reshape", "zero_pad1d",
)
ACTIVATIONS = {"relu", "leaky_relu", "sigmoid", "tanh"}


@dataclass
class LayerSpec:
    kind: str
    attrs: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"unknown layer kind {self.kind!r}")

    def __getitem__(self, key):
        return self.attrs[key]

    def get(self, key, default=None):
        return self.attrs.get(key, default)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.attrs}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        kind = d.pop("kind")
        if "shape" in d:
            d["shape"] = tuple(d["shape"])
        return cls(kind, d)


def L(kind: str, **attrs) -> LayerSpec:
    return LayerSpec(kind, attrs)


# ---------------------------------------------------------------------------

class Layer:
    spec: LayerSpec
    in_shape: tuple
    out_shape: tuple

    def params(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        raise NotImplementedError


def _fans(shape, kind):
    if kind == "dense":
        return shape[0], shape[1]
    if kind == "conv1d":  # (Cout, Cin, K)
        return shape[1] * shape[2], shape[0] * shape[2]
    # conv_transpose weight (Cin, Cout, K)
    return shape[1] * shape[2], shape[0] * shape[2]


def init_weight(shape, kind: str, activation: str | None, rng: np.random.Generator,
                slope: float = 0.0) -> np.ndarray:
    fan_in, fan_out = _fans(shape, kind)
    if activation in ("relu", "leaky_relu"):
        gain = np.sqrt(2.0 / (1.0 + slope ** 2))
        bound = gain * np.sqrt(3.0 / fan_in)  # Kaiming uniform
    else:
        bound = np.sqrt(6.0 / (fan_in + fan_out))  # Xavier uniform
    return rng.uniform(-bound, bound, size=shape)


class Dense(Layer):
    def __init__(self, spec, in_shape, rng, activation=None, slope=0.0):
        if len(in_shape) != 1:
            raise ShapeMismatch(f"dense expects flat input, got {in_shape}")
        n = spec["nodes"]
        self.weight = parameter(init_weight((in_shape[0], n), "dense", activation, rng, slope))
        self.bias = parameter(np.zeros(n))
        self.out_shape = (n,)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        return x @ self.weight + self.bias


class Conv1d(Layer):
    def __init__(self, spec, in_shape, rng, activation=None, slope=0.0):
        C, Lin = in_shape
        k, stride = spec["kernel"], spec.get("stride", 1)
        pad = spec.get("padding", "valid")
        if pad == "same":
            if stride != 1:
                raise InvalidParams("'same' padding is defined for stride 1 only")
            self.pad = F.same_padding(k)
        elif pad == "valid" or pad == 0:
            self.pad = (0, 0)
        else:
            self.pad = (int(pad), int(pad))
        self.stride = stride
        self.weight = parameter(init_weight((spec["filters"], C, k), "conv1d", activation, rng, slope))
        self.bias = parameter(np.zeros(spec["filters"]))
        Lout = F.conv1d_length(Lin, k, stride, self.pad)
        if Lout < 1:
            raise ShapeMismatch(f"conv1d: length {Lin} too short for kernel {k}")
        self.out_shape = (spec["filters"], Lout)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        return F.conv1d(x, self.weight, self.bias, self.stride, self.pad)


class ConvTranspose1d(Layer):
    def __init__(self, spec, in_shape, rng, activation=None, slope=0.0):
        C, Lin = in_shape
        k, self.stride, self.padding = spec["kernel"], spec.get("stride", 1), spec.get("padding", 0)
        if self.stride < 1:
            raise InvalidParams("stride must be >= 1")
        self.weight = parameter(init_weight((C, spec["filters"], k), "conv_transpose1d", activation, rng, slope))
        self.bias = parameter(np.zeros(spec["filters"]))
        self.out_shape = (spec["filters"], F.conv_transpose1d_length(Lin, k, self.stride, self.padding))

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        return F.conv_transpose1d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm1d(Layer):
    def __init__(self, spec, in_shape, rng=None, **_):
        C = in_shape[0]
        self.momentum = spec.get("momentum", 0.9)
        self.eps = spec.get("eps", 1e-5)
        self.gamma = parameter(np.ones(C))
        self.beta = parameter(np.zeros(C))
        self.running_mean = np.zeros(C)
        self.running_var = np.ones(C)
        self.out_shape = in_shape

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            training, self.momentum, self.eps)


class Stateless(Layer):
    def __init__(self, spec, in_shape, rng=None, **_):
        self.kind = spec.kind
        self.rng = rng if rng is not None else np.random.default_rng(0)
        k = spec.kind
        if k == "maxpool1d":
            C, Lin = in_shape
            Lout = (Lin - spec["kernel"]) // spec.get("stride", spec["kernel"]) + 1
            if Lout < 1:
                raise ShapeMismatch(f"maxpool1d: length {Lin} shorter than kernel")
            self.out_shape = (C, Lout)
        elif k == "upsample1d":
            self.out_shape = (in_shape[0], in_shape[1] * spec["size"])
        elif k == "adaptive_avg_pool1d":
            self.out_shape = (in_shape[0], spec.get("output_size", 1))
        elif k == "zero_pad1d":
            self.out_shape = (in_shape[0], in_shape[1] + spec.get("left", 0) + spec.get("right", 0))
        elif k == "flatten":
            self.out_shape = (int(np.prod(in_shape)),)
        elif k == "reshape":
            shape = tuple(spec["shape"])
            if int(np.prod(shape)) != int(np.prod(in_shape)):
                raise ShapeMismatch(f"reshape {in_shape} -> {shape}")
            self.out_shape = shape
        else:
            self.out_shape = in_shape

    def forward(self, x, training=False):
        k, s = self.kind, self.spec
        if k == "relu":
            return F.relu(x)
        if k == "leaky_relu":
            return F.leaky_relu(x, s.get("slope", 0.2))
        if k == "sigmoid":
            return F.sigmoid(x)
        if k == "tanh":
            return F.tanh(x)
        if k == "maxpool1d":
            return F.max_pool1d(x, s["kernel"], s.get("stride", s["kernel"]))
        if k == "upsample1d":
            return F.upsample1d(x, s["size"])
        if k == "adaptive_avg_pool1d":
            return F.adaptive_avg_pool1d(x, s.get("output_size", 1))
        if k == "zero_pad1d":
            return F.pad1d(x, s.get("left", 0), s.get("right", 0))
        if k == "flatten":
            return F.flatten(x)
        if k == "reshape":
            return x.reshape((x.shape[0],) + tuple(s["shape"]))
        if k == "dropout":
            return F.dropout(x, s["rate"], training, self.rng)
        raise InvalidParams(k)


_CLASSES = {"dense": Dense, "conv1d": Conv1d, "conv_transpose1d": ConvTranspose1d,
            "batchnorm1d": BatchNorm1d}


def _next_activation(specs, i):
    for s in specs[i + 1:]:
        if s.kind in ACTIVATIONS:
            return s.kind, s.get("slope", 0.0)
        if s.kind in ("dense", "conv1d", "conv_transpose1d", "flatten", "reshape"):
            break
    return None, 0.0


class Sequential:
    def __init__(self, layers: list[Layer], input_shape: tuple):
        self.layers = layers
        self.input_shape = tuple(input_shape)

    @property
    def specs(self) -> list[LayerSpec]:
        return [l.spec for l in self.layers]

    @property
    def output_shape(self) -> tuple:
        return self.layers[-1].out_shape if self.layers else self.input_shape

    def shape_chain(self) -> list[tuple]:
        return [l.out_shape for l in self.layers]

    def named_params(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.params().items():
                out[f"{i}.{name}"] = p
        return out

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, b in layer.buffers().items():
                out[f"{i}.{name}"] = b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_params().values())

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def forward(self, x, training: bool = False, upto: int | None = None) -> Tensor:
        """Run layers ``[0, upto)`` (all by default)."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        expected = self.input_shape
        if tuple(x.shape[1:]) != expected:
            raise ShapeMismatch(f"expected per-sample shape {expected}, got {tuple(x.shape[1:])}")
        for layer in self.layers[:upto]:
            x = layer.forward(x, training)
        return x

    __call__ = forward

    def set_rng(self, rng: np.random.Generator):
        for layer in self.layers:
            if isinstance(layer, Stateless):
                layer.rng = rng


def build_sequential(specs: list[LayerSpec], input_shape: tuple,
                     rng: np.random.Generator) -> Sequential:
    layers = []
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        act, slope = _next_activation(specs, i)
        cls = _CLASSES.get(spec.kind, Stateless)
        layer = cls(spec, shape, rng=rng, activation=act, slope=slope)
        layer.spec = spec
        layer.in_shape = shape
        shape = layer.out_shape
        layers.append(layer)
    return Sequential(layers, input_shape)
