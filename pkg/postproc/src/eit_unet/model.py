"""Encoder-decoder network for image-to-image regression on EIT images.

Contracting blocks are convolution + ReLU + max-pool; expanding blocks are
transposed convolution + ReLU with the matching contracting features
concatenated and merged. A residual connection from the network input to
the output makes the network learn the correction to its input.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


class ConfigError(ValueError):
    """Invalid network configuration."""


@dataclass(frozen=True)
class UNetConfig:
    """Symmetric encoder/decoder configuration.

    ``channel_multipliers`` scales ``base_channels`` per level and defaults
    to doubling; the input resolution must be divisible by 2**levels.
    """

    levels: int = 3
    base_channels: int = 16
    channel_multipliers: tuple = ()
    kernel_size: int = 3
    resolution: int = 64
    batch_norm: bool = False

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ConfigError("need at least one level")
        if not self.channel_multipliers:
            object.__setattr__(self, "channel_multipliers",
                               tuple(2**i for i in range(self.levels)))
        if len(self.channel_multipliers) != self.levels:
            raise ConfigError("one channel multiplier per level required")
        if self.kernel_size % 2 != 1:
            raise ConfigError("kernel size must be odd")
        if self.resolution % (2**self.levels) != 0:
            raise ConfigError(
                f"resolution {self.resolution} not divisible by 2^{self.levels}")

    @property
    def channels(self) -> tuple:
        return tuple(self.base_channels * m for m in self.channel_multipliers)


class UNet(nn.Module):
    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        k = config.kernel_size
        pad = k // 2
        ch = config.channels

        def norm(c):
            return nn.BatchNorm2d(c) if config.batch_norm else nn.Identity()

        self.encoders = nn.ModuleList()
        self.enc_norms = nn.ModuleList()
        c_in = 1
        for c_out in ch:
            self.encoders.append(nn.Conv2d(c_in, c_out, k, padding=pad))
            self.enc_norms.append(norm(c_out))
            c_in = c_out
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = nn.Conv2d(ch[-1], 2 * ch[-1], k, padding=pad)

        self.upsamplers = nn.ModuleList()
        self.mergers = nn.ModuleList()
        self.dec_norms = nn.ModuleList()
        c_cur = 2 * ch[-1]
        for c_skip in reversed(ch):
            self.upsamplers.append(
                nn.ConvTranspose2d(c_cur, c_skip, kernel_size=2, stride=2))
            self.mergers.append(nn.Conv2d(2 * c_skip, c_skip, k, padding=pad))
            self.dec_norms.append(norm(c_skip))
            c_cur = c_skip
        self.head = nn.Conv2d(ch[0], 1, kernel_size=1)
        self.act = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        h = x
        for enc, bn in zip(self.encoders, self.enc_norms):
            h = self.act(bn(enc(h)))
            skips.append(h)
            h = self.pool(h)
        h = self.act(self.bottleneck(h))
        for up, merge, bn, skip in zip(self.upsamplers, self.mergers,
                                       self.dec_norms, reversed(skips)):
            h = self.act(up(h))
            h = self.act(bn(merge(torch.cat([h, skip], dim=1))))
        return self.head(h) + x


def build_model(config: UNetConfig) -> UNet:
    """Instantiate the network; raises on indivisible resolutions."""
    return UNet(config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def parameter_count(config: UNetConfig) -> int:
    """Trainable parameter count computed from the layer shapes."""
    k2 = config.kernel_size**2
    ch = config.channels
    bn = 2 if config.batch_norm else 0
    total = 0
    c_in = 1
    for c_out in ch:
        total += (c_in * k2 + 1) * c_out + bn * c_out
        c_in = c_out
    total += (ch[-1] * k2 + 1) * (2 * ch[-1])
    c_cur = 2 * ch[-1]
    for c_skip in reversed(ch):
        total += (c_cur * 4 + 1) * c_skip          # 2x2 transposed conv
        total += (2 * c_skip * k2 + 1) * c_skip    # merge conv after concat
        total += bn * c_skip
        c_cur = c_skip
    total += ch[0] + 1                             # 1x1 head
    return total


def sweep_config_for_parameters(target: int, resolution: int = 64,
                                levels_range=(3, 4, 5),
                                bases=(16, 24, 32, 48, 64, 96, 112, 128, 144,
                                       160, 176, 192, 208, 224, 240, 248, 256)):
    """Closest standard doubling configuration to a parameter-count target.

    No standard configuration is expected to match a target exactly; the
    nearest one and its actual count are returned for logging.
    """
    best = None
    for levels in levels_range:
        if resolution % (2**levels) != 0:
            continue
        for base in bases:
            cfg = UNetConfig(levels=levels, base_channels=base,
                             resolution=resolution)
            count = parameter_count(cfg)
            if best is None or abs(count - target) < abs(best[1] - target):
                best = (cfg, count)
    return best


def frobenius_mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over samples of the squared Frobenius norm of the residual."""
    diff = pred - target
    return diff.flatten(start_dim=1).pow(2).sum(dim=1).mean()
