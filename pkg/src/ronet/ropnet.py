"""Rank-one projection network.

Two convolutional branches see the same input. The column branch (kernels
1x3 by default) is averaged across the width to one column per channel, the
row branch (3x1) across the height to one row; their outer product is the
projection, so every output channel slice has rank at most one regardless of
the weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .layers import ConfigurationError, Weights, conv, conv_params, prefixed


@dataclass(frozen=True)
class RopConfig:
    channels_wide: int = 256
    channels_narrow: int = 64
    out_channels: int = 3
    cblock_kernel: tuple[int, int] = (1, 3)
    rblock_kernel: tuple[int, int] = (3, 1)
    blocks_per_branch: int = 3
    final_kernel: tuple[int, int] = (3, 3)

    def __post_init__(self):
        if self.out_channels not in (1, 3):
            raise ConfigurationError(f"out_channels must be 1 or 3, got {self.out_channels}")
        if self.blocks_per_branch < 1:
            raise ConfigurationError("blocks_per_branch must be at least 1")


BRANCHES = (("col", "cblock_kernel"), ("row", "rblock_kernel"))


def init_rop(config: RopConfig, rng: np.random.Generator, init: str = "xavier_uniform") -> Weights:
    w: Weights = {}
    for branch, kattr in BRANCHES:
        kernel = getattr(config, kattr)
        cin = config.out_channels
        for b in range(config.blocks_per_branch):
            base = f"{branch}.block{b}"
            w.update(prefixed(conv_params(rng, cin, config.channels_wide, kernel, init), base + ".conv1."))
            w.update(prefixed(conv_params(rng, config.channels_wide, config.channels_narrow, kernel, init),
                              base + ".conv2."))
            cin = config.channels_narrow
        w.update(prefixed(conv_params(rng, cin, config.out_channels, config.final_kernel, init), f"{branch}.final."))
    return w


def branch_features(x: Tensor, w: Weights, branch: str, config: RopConfig) -> Tensor:
    """Basic blocks (conv, relu, conv) followed by the final conv, before pooling."""
    h = x
    for b in range(config.blocks_per_branch):
        base = f"{branch}.block{b}"
        h = conv(ad.relu(conv(h, w, base + ".conv1")), w, base + ".conv2")
    return conv(h, w, f"{branch}.final")


def rop_forward(x: Tensor, w: Weights, config: RopConfig) -> Tensor:
    if x.ndim != 4 or x.shape[1] != config.out_channels:
        raise ShapeError(f"ROP expects (N, {config.out_channels}, H, W) input, got {x.shape}")
    col = ad.avg_pool_to_column(branch_features(x, w, "col", config))
    row = ad.avg_pool_to_row(branch_features(x, w, "row", config))
    return ad.outer_product(col, row)


def rop_config_from_weights(w: Weights) -> RopConfig:
    """Recover the architecture from a weight table's names and shapes."""
    blocks = sorted({int(k.split(".")[1][5:]) for k in w if k.startswith("col.block")})
    if not blocks:
        raise ConfigurationError("weight table holds no ROP column branch")
    c1 = w["col.block0.conv1.weight"].shape
    c2 = w["col.block0.conv2.weight"].shape
    r1 = w["row.block0.conv1.weight"].shape
    fin = w["col.final.weight"].shape
    return RopConfig(
        channels_wide=c1[0],
        channels_narrow=c2[0],
        out_channels=c1[1],
        cblock_kernel=tuple(c1[2:]),
        rblock_kernel=tuple(r1[2:]),
        blocks_per_branch=len(blocks),
        final_kernel=tuple(fin[2:]),
    )
