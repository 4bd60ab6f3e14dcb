"""Weight tables and the small layer helpers shared by the networks.

Weights live in flat ``dict[str, Tensor]`` tables with dotted names
(``rop1.col.block0.conv1.weight``); sub-networks receive views with the prefix
stripped.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

Weights = dict[str, Tensor]

INITIALIZERS = ("xavier_uniform", "msra_normal")


class ConfigurationError(ValueError):
    pass


def subweights(w: Weights, prefix: str) -> Weights:
    """Entries under ``prefix`` (which should end with a dot), prefix removed."""
    n = len(prefix)
    return {k[n:]: v for k, v in w.items() if k.startswith(prefix)}


def prefixed(w: Weights, prefix: str) -> Weights:
    return {prefix + k: v for k, v in w.items()}


def conv_params(rng: np.random.Generator, cin: int, cout: int, kernel: tuple[int, int],
                init: str = "xavier_uniform", dtype=None) -> Weights:
    kh, kw = kernel
    fan_in = cin * kh * kw
    fan_out = cout * kh * kw
    if init == "xavier_uniform":
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(cout, cin, kh, kw))
    elif init == "msra_normal":
        w = rng.standard_normal((cout, cin, kh, kw)) * np.sqrt(2.0 / fan_in)
    else:
        raise ConfigurationError(f"unknown initializer {init!r}; expected one of {INITIALIZERS}")
    dtype = dtype or ad.get_default_dtype()
    return {
        "weight": Tensor(w.astype(dtype), requires_grad=True),
        "bias": Tensor(np.zeros(cout, dtype=dtype), requires_grad=True),
    }


def bn_params(channels: int, dtype=None) -> Weights:
    dtype = dtype or ad.get_default_dtype()
    return {
        "gamma": Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
        "beta": Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
        "running_mean": Tensor(np.zeros(channels, dtype=dtype)),
        "running_var": Tensor(np.ones(channels, dtype=dtype)),
    }


def conv(x: Tensor, w: Weights, name: str) -> Tensor:
    return ad.conv2d(x, w[name + ".weight"], w[name + ".bias"])


def bn(x: Tensor, w: Weights, name: str, training: bool) -> Tensor:
    return ad.batch_norm(x, w[name + ".gamma"], w[name + ".beta"],
                         w[name + ".running_mean"], w[name + ".running_var"], training)


def trainable(w: Weights) -> Weights:
    return {k: v for k, v in w.items() if v.requires_grad}


def set_trainable(w: Weights, flag: bool) -> None:
    """Toggle gradients on every parameter (running statistics stay buffers)."""
    for k, v in w.items():
        if not k.endswith((".running_mean", ".running_var")):
            v.requires_grad = flag


def count_parameters(w: Weights) -> int:
    return sum(v.size for v in trainable(w).values())


def weights_digest(w: Weights) -> str:
    """SHA-256 over names, shapes and float32 bytes in sorted name order."""
    h = hashlib.sha256()
    for k in sorted(w):
        a = np.ascontiguousarray(w[k].data, dtype="<f4")
        h.update(k.encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def clone(w: Weights) -> Weights:
    return {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, dtype=v.dtype) for k, v in w.items()}


def check_names(names: Iterable[str]) -> None:
    seen = set()
    for n in names:
        if n in seen:
            raise ConfigurationError(f"duplicate weight name {n!r}")
        seen.add(n)
