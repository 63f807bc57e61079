"""The saliency + scanpath network.

Encoder: blocks of 3x3 conv + ReLU, each block followed by 2x2 max
pooling, channel plan given by the config. Bottleneck runs through the
attention gate (identity when disabled). Two consumers share the attended
bottleneck:

* decoder: mirror of the encoder (nearest-neighbour 2x upsampling, then
  the block's convs, the last conv of each block stepping the channel
  count down), finished by a 1x1 conv + sigmoid -> [B, 1, H, W];
* scanpath head: ten 3x3 convs tapering to 8 channels (ReLU after all
  but the last), then a spatial soft-argmax turning each of the 8 channel
  planes into one normalized (x, y) fixation.

Everything is float32 and fully differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionGate, attend
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, ConfigError, DimensionError
from .tensor import ConvLayer, Tensor, concat, conv2d, maxpool2, no_grad, softmax2d, upsample2
from .types import SaliencyMap, Scanpath

DESK_BLOCKS = ((2, 16), (2, 32), (2, 48), (2, 64))
DESK_HEAD = (64, 56, 48, 40, 32, 24, 20, 16, 12, 8)
FULL_BLOCKS = ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512))
FULL_HEAD = (512, 448, 384, 320, 256, 192, 128, 64, 32, 8)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. ``beta`` is the soft-argmax sharpness
    (fixed, not learned)."""

    input_size: tuple[int, int] = (64, 64)  # (H, W)
    in_channels: int = 3
    encoder_blocks: tuple[tuple[int, int], ...] = DESK_BLOCKS  # (convs, channels)
    head_channels: tuple[int, ...] = DESK_HEAD
    beta: float = 1.0
    attention_enabled: bool = True
    attention_reduction: int = 4
    spatial_kernel: int = 7

    def __post_init__(self):
        h, w = self.input_size
        n_blocks = len(self.encoder_blocks)
        if n_blocks < 1:
            raise ConfigError("ModelConfig: need at least one encoder block")
        div = 2 ** n_blocks
        if h < div or w < div or h % div or w % div:
            raise ConfigError(
                f"ModelConfig: input_size {self.input_size} must be divisible "
                f"by 2^{n_blocks} = {div}"
            )
        for i, (count, ch) in enumerate(self.encoder_blocks):
            if count < 1 or ch < 1:
                raise ConfigError(
                    f"ModelConfig: encoder block {i} has invalid (convs, channels) "
                    f"({count}, {ch})"
                )
        head = tuple(self.head_channels)
        if len(head) != 10:
            raise ConfigError(
                f"ModelConfig: head_channels must have exactly 10 entries, "
                f"got {len(head)}"
            )
        if head[-1] != 8:
            raise ConfigError(
                f"ModelConfig: head_channels must end at 8, got {head[-1]}"
            )
        if any(a < b for a, b in zip(head, head[1:])):
            raise ConfigError("ModelConfig: head_channels must be non-increasing")
        if self.beta <= 0:
            raise ConfigError(f"ModelConfig: beta must be > 0, got {self.beta}")
        if self.in_channels < 1:
            raise ConfigError("ModelConfig: in_channels must be >= 1")
        bott = self.encoder_blocks[-1][1]
        if self.attention_enabled and bott % self.attention_reduction:
            raise ConfigError(
                f"ModelConfig: bottleneck channels ({bott}) must be divisible "
                f"by attention_reduction ({self.attention_reduction})"
            )
        if self.spatial_kernel < 1 or self.spatial_kernel % 2 == 0:
            raise ConfigError(
                f"ModelConfig: spatial_kernel must be odd, got {self.spatial_kernel}"
            )

    @property
    def bottleneck_channels(self) -> int:
        return self.encoder_blocks[-1][1]

    @property
    def bottleneck_size(self) -> tuple[int, int]:
        h, w = self.input_size
        div = 2 ** len(self.encoder_blocks)
        return h // div, w // div

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        """Small configuration that trains in minutes on a CPU."""
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        """VGG-16 scale encoder at 224x320 input (the published geometry)."""
        args = dict(
            input_size=(224, 320),
            encoder_blocks=FULL_BLOCKS,
            head_channels=FULL_HEAD,
        )
        args.update(overrides)
        return cls(**args)

    def to_dict(self) -> dict:
        return {
            "input_size": list(self.input_size),
            "in_channels": self.in_channels,
            "encoder_blocks": [list(b) for b in self.encoder_blocks],
            "head_channels": list(self.head_channels),
            "beta": self.beta,
            "attention_enabled": self.attention_enabled,
            "attention_reduction": self.attention_reduction,
            "spatial_kernel": self.spatial_kernel,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(
                input_size=tuple(d["input_size"]),
                in_channels=int(d.get("in_channels", 3)),
                encoder_blocks=tuple(tuple(b) for b in d["encoder_blocks"]),
                head_channels=tuple(d["head_channels"]),
                beta=float(d.get("beta", 1.0)),
                attention_enabled=bool(d.get("attention_enabled", True)),
                attention_reduction=int(d.get("attention_reduction", 4)),
                spatial_kernel=int(d.get("spatial_kernel", 7)),
            )
        except KeyError as e:
            raise ConfigError(f"ModelConfig.from_dict: missing key {e}") from e


def soft_argmax(features: Tensor, beta: float) -> Tensor:
    """Differentiable argmax of each channel plane.

    features: [B, C, H, W]. Returns [B, C, 2] normalized (x, y): the
    softmax-weighted average of the column grid i/W and row grid j/H,
    indices running 0..W-1 and 0..H-1. A uniform plane lands on the
    centroid; as beta grows the output approaches the true argmax.
    """
    if features.ndim != 4:
        raise DimensionError(
            f"soft_argmax: features must be [B,C,H,W], got rank {features.ndim}"
        )
    b, c, h, w = features.shape
    if h * w == 0:
        raise DimensionError(
            f"soft_argmax: empty spatial plane {h}x{w}"
        )
    p = softmax2d(features, beta)
    xs = Tensor((np.arange(w, dtype=np.float32) / np.float32(w)).reshape(1, 1, 1, w))
    ys = Tensor((np.arange(h, dtype=np.float32) / np.float32(h)).reshape(1, 1, h, 1))
    px = (p * xs).sum(axis=(2, 3))  # [B, C]
    py = (p * ys).sum(axis=(2, 3))
    return concat([px.reshape(b, c, 1), py.reshape(b, c, 1)], axis=2)


class SalypathModel:
    """Encoder + attention gate + decoder + scanpath head."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)

        # rng draw order is encoder, decoder, head, attention: configs that
        # differ only in attention share the trunk weights at equal seed.
        self.encoder: list[ConvLayer] = []
        self._enc_names: list[str] = []
        in_ch = config.in_channels
        for bi, (count, ch) in enumerate(config.encoder_blocks):
            for ci in range(count):
                self.encoder.append(ConvLayer.init(in_ch, ch, 3, rng, padding=1))
                self._enc_names.append(f"enc.b{bi}.c{ci}")
                in_ch = ch

        self.decoder: list[ConvLayer] = []
        self._dec_names: list[str] = []
        blocks = config.encoder_blocks
        for k in range(len(blocks) - 1, -1, -1):
            count, ch = blocks[k]
            target = blocks[k - 1][1] if k > 0 else blocks[0][1]
            for ci in range(count):
                out_ch = target if ci == count - 1 else ch
                self.decoder.append(ConvLayer.init(ch, out_ch, 3, rng, padding=1))
                self._dec_names.append(f"dec.b{len(blocks) - 1 - k}.c{ci}")
        self.dec_out = ConvLayer.init(blocks[0][1], 1, 1, rng)

        self.head: list[ConvLayer] = []
        head_in = config.bottleneck_channels
        for hi, hc in enumerate(config.head_channels):
            self.head.append(ConvLayer.init(head_in, hc, 3, rng, padding=1))
            head_in = hc

        self.att: AttentionGate | None = None
        if config.attention_enabled:
            self.att = AttentionGate(
                config.bottleneck_channels,
                reduction=config.attention_reduction,
                spatial_kernel=config.spatial_kernel,
                rng=rng,
            )

    # -- parameters -----------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        """Name -> tensor, in a stable serialization order."""
        out: dict[str, Tensor] = {}
        for name, layer in zip(self._enc_names, self.encoder):
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        if self.att is not None:
            out.update(self.att.parameters())
        for name, layer in zip(self._dec_names, self.decoder):
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        out["dec.out.weight"] = self.dec_out.weight
        out["dec.out.bias"] = self.dec_out.bias
        for hi, layer in enumerate(self.head):
            out[f"head.{hi}.weight"] = layer.weight
            out[f"head.{hi}.bias"] = layer.bias
        return out

    def trunk_parameters(self) -> dict[str, Tensor]:
        """Encoder + attention + decoder (phase-1 trainables)."""
        return {k: v for k, v in self.parameters().items() if not k.startswith("head.")}

    def head_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.parameters().items() if k.startswith("head.")}

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    # -- forward pieces ---------------------------------------------------

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4:
            raise DimensionError(
                f"encode: input must be [B,C,H,W], got rank {x.ndim}"
            )
        h, w = self.config.input_size
        if x.shape[1] != self.config.in_channels:
            raise DimensionError(
                f"encode: input axis 1 has {x.shape[1]} channels, "
                f"expected {self.config.in_channels}"
            )
        if x.shape[2] != h or x.shape[3] != w:
            raise DimensionError(
                f"encode: input spatial axes (2, 3) are {x.shape[2]}x{x.shape[3]}, "
                f"expected {h}x{w}"
            )

    def encode(self, x: Tensor) -> Tensor:
        """Image batch -> raw bottleneck [B, C_bott, H/2^k, W/2^k]."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        self._check_input(x)
        i = 0
        for count, _ in self.config.encoder_blocks:
            for _ in range(count):
                x = self.encoder[i](x).relu()
                i += 1
            x = maxpool2(x)
        return x

    def attend(self, bottleneck: Tensor) -> Tensor:
        if self.att is None:
            return bottleneck
        return attend(bottleneck, self.att)

    def decode(self, bottleneck: Tensor) -> Tensor:
        """Attended bottleneck -> saliency map batch [B, 1, H, W] in (0, 1)."""
        x = bottleneck
        i = 0
        for count, _ in reversed(self.config.encoder_blocks):
            x = upsample2(x)
            for _ in range(count):
                x = self.decoder[i](x).relu()
                i += 1
        return self.dec_out(x).sigmoid()

    def scanpath_features(self, bottleneck: Tensor) -> Tensor:
        """Attended bottleneck -> [B, 8, h, w] fixation feature planes."""
        x = bottleneck
        last = len(self.head) - 1
        for i, layer in enumerate(self.head):
            x = layer(x)
            if i != last:
                x = x.relu()
        return x

    def forward_tensors(self, x: Tensor, use_attention: bool | None = None
                        ) -> tuple[Tensor, Tensor]:
        """Full differentiable forward pass.

        Returns (maps [B,1,H,W], points [B,8,2]). ``use_attention`` overrides
        the config switch on this one call (same weights, gate bypassed),
        which is how the gamma=0 identity is validated.
        """
        bott = self.encode(x)
        gate_on = self.config.attention_enabled if use_attention is None else use_attention
        if gate_on and self.att is not None:
            bott = attend(bott, self.att)
        maps = self.decode(bott)
        feats = self.scanpath_features(bott)
        points = soft_argmax(feats, self.config.beta)
        return maps, points

    def forward(self, image) -> tuple[SaliencyMap, Scanpath]:
        """Single image [3, H, W] (array or Tensor) -> domain objects."""
        arr = image.data if isinstance(image, Tensor) else np.asarray(image, np.float32)
        if arr.ndim != 3:
            raise DimensionError(
                f"forward: image must be [C,H,W], got rank {arr.ndim}"
            )
        with no_grad():
            maps, points = self.forward_tensors(Tensor(arr[None]))
        values = np.clip(maps.data[0, 0], 0.0, 1.0)
        pts = np.clip(points.data[0], 0.0, 1.0)
        return SaliencyMap(values), Scanpath(pts)

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(path, self.parameters(), config=self.config.to_dict())

    @classmethod
    def load(cls, path) -> "SalypathModel":
        tensors, config = load_checkpoint(path)
        if config is None:
            raise CheckpointError(f"{path}: checkpoint has no embedded config")
        model = cls(ModelConfig.from_dict(config), seed=0)
        model.load_state(tensors, source=str(path))
        return model

    def load_state(self, tensors: dict[str, np.ndarray], source: str = "checkpoint") -> None:
        """Copy arrays into parameters; mismatches raise a structured error
        listing expected vs found shapes and any missing/unexpected names."""
        params = self.parameters()
        problems = []
        for name, p in params.items():
            if name not in tensors:
                problems.append(f"missing tensor {name!r} (expected shape {tuple(p.shape)})")
                continue
            arr = tensors[name]
            if tuple(arr.shape) != tuple(p.shape):
                problems.append(
                    f"{name}: expected shape {tuple(p.shape)}, found {tuple(arr.shape)}"
                )
        for name in tensors:
            if name not in params:
                problems.append(f"unexpected tensor {name!r}")
        if problems:
            raise CheckpointError(f"{source}: " + "; ".join(problems))
        for name, p in params.items():
            p.data = np.asarray(tensors[name], dtype=np.float32).copy()
            p.grad = None
