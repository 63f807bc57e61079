"""Convolutional block attention for the bottleneck.

Channel branch: spatial average-pool and max-pool descriptors pushed
through one shared two-layer 1x1-conv MLP (reduction r, ReLU between),
summed, squashed with a sigmoid -> [B, C, 1, 1].

Spatial branch: channel-wise mean and max maps concatenated and convolved
with a single k x k kernel (k odd, default 7, padding (k-1)//2), squashed
-> [B, 1, H, W].

Composition, deliberately and exactly:

    z  = x * spatial(x * channel(x))
    x' = x + gamma * z

The spatial weights multiply the raw input x, not the channel-refined
tensor. gamma is a learnable scalar initialized to 0, so a fresh gate is
the identity map (up to adding a literal zero).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .tensor import ConvLayer, Tensor, concat


class AttentionGate:
    """Parameter bundle for the attention block at a given channel width."""

    def __init__(self, channels: int, reduction: int = 4, spatial_kernel: int = 7,
                 rng: np.random.Generator | None = None):
        channels = int(channels)
        reduction = int(reduction)
        spatial_kernel = int(spatial_kernel)
        if channels < 1:
            raise ConfigError(f"AttentionGate: channels must be >= 1, got {channels}")
        if reduction < 1 or channels % reduction != 0:
            raise ConfigError(
                f"AttentionGate: channels ({channels}) must be divisible by "
                f"reduction ({reduction})"
            )
        if spatial_kernel < 1 or spatial_kernel % 2 == 0:
            raise ConfigError(
                f"AttentionGate: spatial_kernel must be odd, got {spatial_kernel}"
            )
        if rng is None:
            rng = np.random.default_rng(0)
        hidden = channels // reduction
        self.channels = channels
        self.reduction = reduction
        self.spatial_kernel = spatial_kernel
        self.ch_mlp = (
            ConvLayer.init(channels, hidden, 1, rng),
            ConvLayer.init(hidden, channels, 1, rng),
        )
        self.sp_conv = ConvLayer.init(2, 1, spatial_kernel, rng,
                                      padding=(spatial_kernel - 1) // 2)
        self.gamma = Tensor(np.float32(0.0), requires_grad=True, name="att.gamma")

    def parameters(self) -> dict[str, Tensor]:
        return {
            "att.ch_mlp.0.weight": self.ch_mlp[0].weight,
            "att.ch_mlp.0.bias": self.ch_mlp[0].bias,
            "att.ch_mlp.1.weight": self.ch_mlp[1].weight,
            "att.ch_mlp.1.bias": self.ch_mlp[1].bias,
            "att.sp_conv.weight": self.sp_conv.weight,
            "att.sp_conv.bias": self.sp_conv.bias,
            "att.gamma": self.gamma,
        }

    def _mlp(self, d: Tensor) -> Tensor:
        return self.ch_mlp[1](self.ch_mlp[0](d).relu())


def channel_attention(x: Tensor, gate: AttentionGate) -> Tensor:
    """Per-channel gains in (0, 1), shape [B, C, 1, 1]."""
    avg = x.mean(axis=(2, 3), keepdims=True)
    mx = x.max(axis=(2, 3), keepdims=True)
    return (gate._mlp(avg) + gate._mlp(mx)).sigmoid()


def spatial_attention(x: Tensor, gate: AttentionGate) -> Tensor:
    """Per-pixel gains in (0, 1), shape [B, 1, H, W]."""
    mean_map = x.mean(axis=1, keepdims=True)
    max_map = x.max(axis=1, keepdims=True)
    return gate.sp_conv(concat([mean_map, max_map], axis=1)).sigmoid()


def attend(x: Tensor, gate: AttentionGate) -> Tensor:
    """Gated residual attention; identity when gamma == 0."""
    refined = x * channel_attention(x, gate)
    z = x * spatial_attention(refined, gate)
    return x + z * gate.gamma
