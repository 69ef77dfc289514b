"""Slice-classification head: per-axial-slice, per-region logits."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ShapeError


class SliceClassifier(nn.Module):
    """Reduce decoder features to a slice sequence and classify each slice.

    Pipeline: conv3 block -> global average over the two non-axial axes ->
    (optional stride-2 transpose conv restoring the axial extent) ->
    stacked BiLSTM -> pointwise linear to one logit per region per slice.

    The nested U-Net variant feeds full-resolution features and uses batch
    norm in its conv block; the pyramid-fusion variant feeds half-resolution
    features, uses group norm, and needs the axial upsample.
    """

    def __init__(
        self,
        in_channels: int,
        conv_channels: int,
        lstm_layers: int,
        num_regions: int = 3,
        dropout: float = 0.2,
        norm: str = "group",
        norm_groups: int = 8,
        upsample_axial: bool = False,
    ):
        super().__init__()
        self.conv = nn.Conv3d(in_channels, conv_channels, 3, padding=1)
        if norm == "batch":
            self.norm = nn.BatchNorm3d(conv_channels)
        else:
            self.norm = nn.GroupNorm(norm_groups, conv_channels)
        self.act = nn.ReLU(inplace=True)
        self.upsample_axial = upsample_axial
        if upsample_axial:
            self.tconv = nn.ConvTranspose1d(
                conv_channels, conv_channels, 3, stride=2, padding=1, output_padding=1
            )
            self.tconv_norm = nn.GroupNorm(norm_groups, conv_channels)
        self.lstm = nn.LSTM(
            conv_channels,
            conv_channels,
            num_layers=lstm_layers,
            bidirectional=True,
            batch_first=True,
            dropout=dropout if lstm_layers > 1 else 0.0,
        )
        self.fc = nn.Conv1d(2 * conv_channels, num_regions, 1)

    def pool(self, x: torch.Tensor) -> torch.Tensor:
        """Average over the two non-axial axes; axial is the last dim."""
        return x.mean(dim=(2, 3))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.ndim != 5:
            raise ShapeError(f"expected (B, C, X, Y, A) features, got {tuple(features.shape)}")
        if features.shape[-1] < 2:
            raise ShapeError(f"axial extent {features.shape[-1]} is below kernel support")
        x = self.act(self.norm(self.conv(features)))
        x = self.pool(x)
        if self.upsample_axial:
            x = self.act(self.tconv_norm(self.tconv(x)))
        out, _ = self.lstm(x.transpose(1, 2))
        return self.fc(out.transpose(1, 2))
