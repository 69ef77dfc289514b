"""Dice, focal, and BCE losses for the segmentation and classification branches.

The training objective is the unweighted sum

    L = L_focal_seg + L_dice + L_focal_cls + L_bce_cls

with the soft Dice term computed per region channel and averaged, and the
classification targets derived from region presence per axial slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError, ShapeError

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-5
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    component_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.focal_gamma < 0:
            raise ConfigError(f"focal_gamma must be >= 0, got {self.focal_gamma}")
        if not 0.0 < self.focal_alpha <= 1.0:
            raise ConfigError(f"focal_alpha must be in (0, 1], got {self.focal_alpha}")


def dice_loss(p: torch.Tensor, g: torch.Tensor, epsilon: float = 1e-5) -> torch.Tensor:
    """Soft Dice loss, per channel then averaged.

    ``p`` holds probabilities in [0, 1] and ``g`` binary targets. A 1-D
    input is treated as a single channel; otherwise dim 0 indexes channels
    and all remaining dims are summed as voxels.
    """
    if p.shape != g.shape:
        raise ShapeError(f"prediction shape {tuple(p.shape)} != target shape {tuple(g.shape)}")
    if p.ndim == 1:
        p = p.unsqueeze(0)
        g = g.unsqueeze(0)
    dims = tuple(range(1, p.ndim))
    g = g.to(p.dtype)
    intersection = (p * g).sum(dim=dims)
    denom = (p * p).sum(dim=dims) + (g * g).sum(dim=dims) + epsilon
    return (1.0 - 2.0 * intersection / denom).mean()


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)


def focal_loss(
    p: torch.Tensor, y: torch.Tensor, gamma: float = 2.0, alpha: float = 0.25
) -> torch.Tensor:
    """Focal loss -alpha (1 - p_t)^gamma log(p_t), averaged over elements.

    ``alpha`` scales the loss uniformly, so gamma=0 with alpha=1 reduces
    exactly to binary cross entropy.
    """
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {tuple(p.shape)} != target shape {tuple(y.shape)}")
    p = _clamp(p)
    y = y.to(p.dtype)
    p_t = y * p + (1.0 - y) * (1.0 - p)
    return (-alpha * (1.0 - p_t) ** gamma * torch.log(p_t)).mean()


def bce_loss(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Binary cross entropy on probabilities, averaged over elements."""
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {tuple(p.shape)} != target shape {tuple(y.shape)}")
    p = _clamp(p)
    y = y.to(p.dtype)
    return -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)).mean()


def slice_presence(regions: torch.Tensor, axial_dim: int = -1) -> torch.Tensor:
    """Per-region, per-axial-slice targets: 1 iff any voxel of the region
    lies on that slice.

    ``regions`` is (..., 3, X, Y, Z) with the axial extent at ``axial_dim``;
    returns (..., 3, n_slices) floats.
    """
    regions = regions.movedim(axial_dim, -1)
    reduce_dims = tuple(range(regions.ndim - 4 + 1, regions.ndim - 1))
    return regions.amax(dim=reduce_dims).to(torch.float32)


def total_loss(
    seg_logits: torch.Tensor,
    slice_logits: torch.Tensor,
    region_gt: torch.Tensor,
    slice_gt: torch.Tensor,
    cfg: LossConfig = LossConfig(),
) -> tuple[torch.Tensor, dict[str, float]]:
    """Sum of the four branch losses plus a per-component breakdown.

    Accepts batched (B, 3, ...) or single-case (3, ...) tensors; logits are
    passed through a sigmoid internally.
    """
    if seg_logits.ndim == 4:
        seg_logits = seg_logits.unsqueeze(0)
        region_gt = region_gt.unsqueeze(0)
    if slice_logits.ndim == 2:
        slice_logits = slice_logits.unsqueeze(0)
        slice_gt = slice_gt.unsqueeze(0)

    seg_p = torch.sigmoid(seg_logits)
    slice_p = torch.sigmoid(slice_logits)

    # fold batch and region dims so Dice is per (sample, region) then averaged
    b, c = seg_p.shape[:2]
    dice = dice_loss(
        seg_p.reshape(b * c, -1), region_gt.reshape(b * c, -1), epsilon=cfg.epsilon
    )
    focal_seg = focal_loss(seg_p, region_gt, gamma=cfg.focal_gamma, alpha=cfg.focal_alpha)
    focal_cls = focal_loss(slice_p, slice_gt, gamma=cfg.focal_gamma, alpha=cfg.focal_alpha)
    bce_cls = bce_loss(slice_p, slice_gt)

    # accumulate in float64 so the total matches the reported breakdown exactly
    w = cfg.component_weights
    total = (
        w[0] * focal_seg.double()
        + w[1] * dice.double()
        + w[2] * focal_cls.double()
        + w[3] * bce_cls.double()
    )
    breakdown = {
        "focal_seg": float(focal_seg.detach()),
        "dice": float(dice.detach()),
        "focal_cls": float(focal_cls.detach()),
        "bce_cls": float(bce_cls.detach()),
    }
    return total, breakdown
