"""Shared building blocks and the network configuration."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError, ShapeError

ARCHITECTURES = ("bifpn", "unetpp")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters shared by both model variants.

    ``encoder_channels`` sets the per-level widths (and thereby the number
    of pyramid levels); widths must double level to level and every
    group-normalized channel count must be divisible by ``norm_groups``.
    ``classifier_channels`` overrides the derived classifier width
    (half the fused width for the pyramid-fusion variant, double the
    concatenated top-row width for the nested U-Net).
    """

    in_channels: int = 4
    encoder_channels: tuple[int, ...] = (16, 32, 64, 128)
    pyramid_channels: int = 256
    bifpn_layers: int = 3
    norm_groups: int = 8
    num_regions: int = 3
    dropout_rate: float = 0.2
    lstm_layers: int = 2
    classifier_channels: int | None = None
    deep_supervision: bool = True

    def __post_init__(self):
        if self.num_regions != 3:
            raise ConfigError(f"num_regions is fixed to 3, got {self.num_regions}")
        if len(self.encoder_channels) < 2:
            raise ConfigError("need at least two encoder levels")
        for a, b in zip(self.encoder_channels, self.encoder_channels[1:]):
            if b != 2 * a:
                raise ConfigError(
                    f"encoder_channels must double per level, got {self.encoder_channels}"
                )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.lstm_layers < 1:
            raise ConfigError(f"lstm_layers must be >= 1, got {self.lstm_layers}")
        if self.bifpn_layers < 1:
            raise ConfigError(f"bifpn_layers must be >= 1, got {self.bifpn_layers}")
        for ch in (*self.encoder_channels, self.pyramid_channels):
            if ch % self.norm_groups != 0:
                raise ConfigError(
                    f"norm_groups={self.norm_groups} must divide channel count {ch}"
                )

    @property
    def num_levels(self) -> int:
        return len(self.encoder_channels)

    @property
    def total_stride(self) -> int:
        return 2 ** self.num_levels

    @classmethod
    def for_architecture(cls, architecture: str, **overrides) -> "NetworkConfig":
        """Variant defaults: the nested U-Net is wider at the top and uses
        a deeper BiLSTM stack."""
        if architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {architecture!r}")
        defaults = {}
        if architecture == "unetpp":
            defaults = {"encoder_channels": (32, 64, 128, 256), "lstm_layers": 3}
        defaults.update(overrides)
        return cls(**defaults)


class ConvNormAct(nn.Module):
    """conv3 -> group norm -> (dropout) -> ReLU."""

    def __init__(self, in_ch, out_ch, groups, stride=1, dropout=0.0):
        super().__init__()
        self.conv = nn.Conv3d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.norm = nn.GroupNorm(groups, out_ch)
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.dropout(self.norm(self.conv(x))))


class ResidualDownBlock(nn.Module):
    """Stride-2 residual unit: two conv3/GN/dropout/ReLU stages plus a
    stride-2 conv3 shortcut added to the output."""

    def __init__(self, in_ch, out_ch, groups, dropout):
        super().__init__()
        self.main = nn.Sequential(
            ConvNormAct(in_ch, out_ch, groups, stride=2, dropout=dropout),
            ConvNormAct(out_ch, out_ch, groups, stride=1, dropout=dropout),
        )
        self.shortcut = nn.Conv3d(in_ch, out_ch, 3, stride=2, padding=1)

    def forward(self, x):
        return self.main(x) + self.shortcut(x)


class Encoder(nn.Module):
    """Residual feature extractor producing one level per configured width,
    at strides 2, 4, ..., 2^L."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        chans = (cfg.in_channels, *cfg.encoder_channels)
        self.blocks = nn.ModuleList(
            ResidualDownBlock(chans[i], chans[i + 1], cfg.norm_groups, cfg.dropout_rate)
            for i in range(cfg.num_levels)
        )
        self.total_stride = cfg.total_stride

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        check_divisible(x.shape[2:], self.total_stride)
        levels = []
        for block in self.blocks:
            x = block(x)
            levels.append(x)
        return levels


def check_divisible(spatial, stride: int) -> None:
    if any(int(s) % stride != 0 for s in spatial):
        raise ShapeError(
            f"spatial extents {tuple(int(s) for s in spatial)} must be divisible by {stride}"
        )


def count_parameters(module: nn.Module) -> int:
    """Number of trainable scalars."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
