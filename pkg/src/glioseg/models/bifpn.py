"""Bidirectional feature pyramid segmentation network with a slice classifier.

Encoder levels are projected to a common width by pointwise convs, fused by
stacked bidirectional pyramid layers (top-down then bottom-up passes with
learned nonnegative weights), decoded Panoptic-FPN style to a half-resolution
concatenated map, and finished by a pointwise conv plus trilinear upsample.
The concatenated map also feeds the slice classifier.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeError
from .classifier import SliceClassifier
from .common import ConvNormAct, Encoder, NetworkConfig

FUSION_EPS = 1e-4


def fast_normalized_fusion(
    inputs: list[torch.Tensor], weights: torch.Tensor, eps: float = FUSION_EPS
) -> torch.Tensor:
    """Weighted sum with ReLU-constrained weights, normalized by their total."""
    if len(inputs) != weights.numel():
        raise ShapeError(f"{len(inputs)} inputs but {weights.numel()} fusion weights")
    w = F.relu(weights)
    out = inputs[0] * w[0]
    for x, wi in zip(inputs[1:], w[1:]):
        out = out + x * wi
    return out / (w.sum() + eps)


class FusionNode(nn.Module):
    """Fuse same-resolution inputs, then conv3/GN/ReLU."""

    def __init__(self, n_inputs: int, channels: int, groups: int):
        super().__init__()
        self.weights = nn.Parameter(torch.ones(n_inputs))
        self.conv = ConvNormAct(channels, channels, groups)

    def forward(self, inputs: list[torch.Tensor]) -> torch.Tensor:
        return self.conv(fast_normalized_fusion(inputs, self.weights))


def _resize_up(x: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, size=like.shape[2:], mode="nearest")


def _resize_down(x: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    out = F.max_pool3d(x, kernel_size=2, stride=2)
    if out.shape[2:] != like.shape[2:]:
        raise ShapeError(f"downsample produced {tuple(out.shape[2:])}, expected {tuple(like.shape[2:])}")
    return out


class BiFPNLayer(nn.Module):
    """One top-down + bottom-up pass over L levels (level 0 = finest).

    Top-down nodes exist at levels L-2..1, the finest output closes the
    top-down path, and the bottom-up pass re-fuses each level with its
    top-down node and the downsampled previous output; the coarsest output
    fuses its input with the downsampled neighbor only.
    """

    def __init__(self, num_levels: int, channels: int, groups: int):
        super().__init__()
        self.num_levels = num_levels
        self.td_nodes = nn.ModuleDict(
            {str(i): FusionNode(2, channels, groups) for i in range(1, num_levels - 1)}
        )
        out_nodes = {"0": FusionNode(2, channels, groups)}
        for i in range(1, num_levels - 1):
            out_nodes[str(i)] = FusionNode(3, channels, groups)
        out_nodes[str(num_levels - 1)] = FusionNode(2, channels, groups)
        self.out_nodes = nn.ModuleDict(out_nodes)

    def forward(self, levels: list[torch.Tensor]) -> list[torch.Tensor]:
        n = self.num_levels
        td: dict[int, torch.Tensor] = {n - 1: levels[n - 1]}
        for i in range(n - 2, 0, -1):
            td[i] = self.td_nodes[str(i)]([levels[i], _resize_up(td[i + 1], levels[i])])

        outs: list[torch.Tensor] = [None] * n
        outs[0] = self.out_nodes["0"]([levels[0], _resize_up(td[1], levels[0])])
        for i in range(1, n - 1):
            outs[i] = self.out_nodes[str(i)](
                [levels[i], td[i], _resize_down(outs[i - 1], levels[i])]
            )
        outs[n - 1] = self.out_nodes[str(n - 1)](
            [levels[n - 1], _resize_down(outs[n - 2], levels[n - 1])]
        )
        return outs


class BiFPN(nn.Module):
    """Pointwise lateral projections followed by stacked fusion layers."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.laterals = nn.ModuleList(
            nn.Conv3d(ch, cfg.pyramid_channels, 1) for ch in cfg.encoder_channels
        )
        self.layers = nn.ModuleList(
            BiFPNLayer(cfg.num_levels, cfg.pyramid_channels, cfg.norm_groups)
            for _ in range(cfg.bifpn_layers)
        )

    def forward(self, levels: list[torch.Tensor]) -> list[torch.Tensor]:
        levels = [lat(x) for lat, x in zip(self.laterals, levels)]
        for layer in self.layers:
            levels = layer(levels)
        return levels


class PyramidDecoder(nn.Module):
    """Upsample every pyramid level to half input resolution and concatenate.

    Level i (stride 2^(i+1)) passes through i upsample stages of
    conv3/GN/ReLU + 2x trilinear; the finest level gets one conv stage
    without upsampling.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        ch = cfg.pyramid_channels
        paths = []
        for i in range(cfg.num_levels):
            stages = [ConvNormAct(ch, ch, cfg.norm_groups) for _ in range(max(i, 1))]
            paths.append(nn.ModuleList(stages))
        self.paths = nn.ModuleList(paths)
        self.fused_channels = cfg.num_levels * ch

    def forward(self, levels: list[torch.Tensor]) -> torch.Tensor:
        maps = []
        for i, (path, x) in enumerate(zip(self.paths, levels)):
            for stage in path:
                x = stage(x)
                if i > 0:
                    x = F.interpolate(x, scale_factor=2, mode="trilinear", align_corners=False)
            maps.append(x)
        ref = maps[0].shape[2:]
        if any(m.shape[2:] != ref for m in maps):
            raise ShapeError("decoder paths produced mismatched spatial extents")
        return torch.cat(maps, dim=1)


class BiFPNNet(nn.Module):
    """Full pyramid-fusion segmentation network with the slice classifier."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.bifpn = BiFPN(cfg)
        self.decoder = PyramidDecoder(cfg)
        self.seg_head = nn.Conv3d(self.decoder.fused_channels, cfg.num_regions, 1)
        cls_channels = cfg.classifier_channels or self.decoder.fused_channels // 2
        self.classifier = SliceClassifier(
            in_channels=self.decoder.fused_channels,
            conv_channels=cls_channels,
            lstm_layers=cfg.lstm_layers,
            num_regions=cfg.num_regions,
            dropout=cfg.dropout_rate,
            norm="group",
            norm_groups=cfg.norm_groups,
            upsample_axial=True,
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        levels = self.encoder(x)
        levels = self.bifpn(levels)
        fused = self.decoder(levels)
        seg = F.interpolate(
            self.seg_head(fused), scale_factor=2, mode="trilinear", align_corners=False
        )
        slice_logits = self.classifier(fused)
        return seg, slice_logits
