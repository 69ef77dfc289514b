"""Nested U-Net with dense skip pathways, deep supervision, and a slice classifier.

Grid of nodes X[i][j] (level i, column j): column 0 is the encoder; node
X[i][j] consumes the upsampled X[i+1][j-1] concatenated with X[i][0..j-1].
Top-row columns j >= 1 each carry a segmentation head (ReLU, two convs,
upsample to input size); with deep supervision their logits are averaged.
The concatenation of all top-row nodes feeds the slice classifier.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .classifier import SliceClassifier
from .common import ConvNormAct, NetworkConfig, check_divisible


class NodeBlock(nn.Module):
    """Two conv3/GN/ReLU stages."""

    def __init__(self, in_ch, out_ch, groups):
        super().__init__()
        self.block = nn.Sequential(
            ConvNormAct(in_ch, out_ch, groups), ConvNormAct(out_ch, out_ch, groups)
        )

    def forward(self, x):
        return self.block(x)


class SegHead(nn.Module):
    """ReLU then two conv3 layers down to region logits, upsampled to input size."""

    def __init__(self, channels, num_regions):
        super().__init__()
        self.conv1 = nn.Conv3d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv3d(channels, num_regions, 3, padding=1)

    def forward(self, x, out_size):
        x = self.conv2(self.conv1(F.relu(x)))
        if x.shape[2:] != out_size:
            x = F.interpolate(x, size=out_size, mode="trilinear", align_corners=False)
        return x


class NestedUNet(nn.Module):
    """Full nested U-Net segmentation network with the slice classifier."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.encoder_channels
        depth = len(ch)
        self.depth = depth
        self.pool = nn.MaxPool3d(2)

        nodes = {}
        for i in range(depth):
            in_ch = cfg.in_channels if i == 0 else ch[i - 1]
            nodes[f"{i}_0"] = NodeBlock(in_ch, ch[i], cfg.norm_groups)
        for j in range(1, depth):
            for i in range(depth - j):
                in_ch = j * ch[i] + ch[i + 1]
                nodes[f"{i}_{j}"] = NodeBlock(in_ch, ch[i], cfg.norm_groups)
        self.nodes = nn.ModuleDict(nodes)

        head_cols = range(1, depth) if cfg.deep_supervision else [depth - 1]
        self.heads = nn.ModuleDict(
            {str(j): SegHead(ch[0], cfg.num_regions) for j in head_cols}
        )

        cls_in = depth * ch[0]
        cls_channels = cfg.classifier_channels or 2 * cls_in
        self.classifier = SliceClassifier(
            in_channels=cls_in,
            conv_channels=cls_channels,
            lstm_layers=cfg.lstm_layers,
            num_regions=cfg.num_regions,
            dropout=cfg.dropout_rate,
            norm="batch",
            upsample_axial=False,
        )

    def forward_features(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (segmentation logits, concatenated top-row features)."""
        # column 0 needs depth-1 poolings; the shared stride contract is 2^depth
        check_divisible(x.shape[2:], 2 ** self.depth)
        grid: dict[tuple[int, int], torch.Tensor] = {}
        for i in range(self.depth):
            inp = x if i == 0 else self.pool(grid[(i - 1, 0)])
            grid[(i, 0)] = self.nodes[f"{i}_0"](inp)

        for j in range(1, self.depth):
            for i in range(self.depth - j):
                below = grid[(i + 1, j - 1)]
                up = F.interpolate(
                    below, size=grid[(i, 0)].shape[2:], mode="trilinear", align_corners=False
                )
                row = [grid[(i, k)] for k in range(j)]
                grid[(i, j)] = self.nodes[f"{i}_{j}"](torch.cat([*row, up], dim=1))

        out_size = x.shape[2:]
        logit_sum = None
        for j, head in self.heads.items():
            logits = head(grid[(0, int(j))], out_size)
            logit_sum = logits if logit_sum is None else logit_sum + logits
        seg = logit_sum / len(self.heads)

        top_row = torch.cat([grid[(0, j)] for j in range(self.depth)], dim=1)
        return seg, top_row

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        seg, top_row = self.forward_features(x)
        return seg, self.classifier(top_row)
