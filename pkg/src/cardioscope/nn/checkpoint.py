"""JSON checkpoints for :class:`Sequential` networks.

Document layout::

    {"format": "cardioscope-checkpoint/1",
     "input_shape": [...],
     "spec": [{"kind": ..., <attrs>}, ...],
     "params": {"<layer index>.<name>": [flat values]},
     "buffers": {"<layer index>.<name>": [flat values]},
     "norm_stats": {...} | null}
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import ConfigInvalid
from .layers import LayerSpec, Sequential, build_sequential

FORMAT = "cardioscope-checkpoint/1"


def network_to_dict(net: Sequential, norm_stats: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "input_shape": list(net.input_shape),
        "spec": [s.to_dict() for s in net.specs],
        "params": {k: p.data.reshape(-1).tolist() for k, p in net.named_params().items()},
        "buffers": {k: b.reshape(-1).tolist() for k, b in net.named_buffers().items()},
        "norm_stats": norm_stats,
    }


def network_from_dict(doc: dict) -> Sequential:
    if doc.get("format") != FORMAT:
        raise ConfigInvalid(f"unsupported checkpoint format {doc.get('format')!r}")
    specs = [LayerSpec.from_dict(s) for s in doc["spec"]]
    net = build_sequential(specs, tuple(doc["input_shape"]), np.random.default_rng(0))
    for k, p in net.named_params().items():
        vals = np.asarray(doc["params"][k], dtype=np.float64)
        if vals.size != p.size:
            raise ConfigInvalid(f"checkpoint param {k}: {vals.size} values for shape {p.shape}")
        p.data[...] = vals.reshape(p.shape)
    for k, b in net.named_buffers().items():
        if k in doc.get("buffers", {}):
            b[...] = np.asarray(doc["buffers"][k]).reshape(b.shape)
    return net


def save_network(net: Sequential, path, norm_stats: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net, norm_stats), fh)


def load_network(path) -> tuple[Sequential, dict | None]:
    with open(path) as fh:
        doc = json.load(fh)
    return network_from_dict(doc), doc.get("norm_stats")
