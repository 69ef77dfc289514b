"""Full-volume prediction: padding, flip TTA, ensembling, thresholding,
classification gating, and geometry restoration.

Every (model, flip) pair contributes one forward pass; outputs are un-flipped
back to the input frame and averaged as one joint arithmetic mean in logit
space (probability-space averaging is available as a config switch, in which
case the mean probability is mapped back through the logit so downstream
thresholding is unchanged). Negative slice-classification decisions zero the
corresponding region on that axial slice.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
from scipy import ndimage

from .data import CropBox, LabelVolume, MultimodalVolume, RegionMask, regions_to_labels
from .errors import ConfigError, ShapeError
from .preprocess import compute_foreground_crop, crop_volume, normalize, pad_to_multiple, uncrop_volume, unpad

ALL_FLIPS: tuple[tuple[int, ...], ...] = (
    (),
    (0,),
    (1,),
    (2,),
    (0, 1),
    (0, 2),
    (1, 2),
    (0, 1, 2),
)
AXIAL = 2  # axial is always the last spatial dim in network space


@dataclass(frozen=True)
class InferenceConfig:
    tta_flips: tuple[tuple[int, ...], ...] = ALL_FLIPS
    threshold: float = 0.5
    gate_enabled: bool = True
    avg_space: str = "logits"
    tiling: str = "pad"
    roi_size: tuple[int, int, int] = (128, 128, 96)
    min_region_size: int = 0
    ensemble_members: tuple[str, ...] = ()
    write_probabilities: bool = False

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        if () not in self.tta_flips:
            raise ConfigError("tta_flips must include the identity flip ()")
        if self.avg_space not in ("logits", "probs"):
            raise ConfigError(f"avg_space must be 'logits' or 'probs', got {self.avg_space!r}")
        if self.tiling not in ("pad", "sliding"):
            raise ConfigError(f"tiling must be 'pad' or 'sliding', got {self.tiling!r}")
        if self.min_region_size < 0:
            raise ConfigError("min_region_size must be >= 0")


@dataclass
class PreparedInput:
    """Preprocessed network input plus everything needed to restore geometry."""

    tensor: torch.Tensor  # (1, 4, X, Y, A), axial last
    box: CropBox
    pads: tuple[tuple[int, int], ...]
    axial_axis: int
    original_shape: tuple[int, int, int]
    affine: np.ndarray
    spacing: tuple[float, float, float]


def prepare_input(volume: MultimodalVolume, stride: int = 16) -> PreparedInput:
    """Crop to foreground, normalize, move axial last, pad to the stride."""
    box = compute_foreground_crop(volume)
    cropped = volume.with_modalities(crop_volume(volume.modalities, box))
    normalized = normalize(cropped)
    arr = np.moveaxis(normalized.modalities, 1 + volume.axial_axis, 3)
    padded, pads = pad_to_multiple(arr, stride)
    tensor = torch.from_numpy(np.ascontiguousarray(padded)).unsqueeze(0)
    return PreparedInput(
        tensor=tensor,
        box=box,
        pads=pads,
        axial_axis=volume.axial_axis,
        original_shape=volume.shape,
        affine=volume.affine,
        spacing=volume.spacing,
    )


def restore_geometry(arr: np.ndarray, prep: PreparedInput) -> np.ndarray:
    """Invert prepare_input's pad/transpose/crop for a (..., X, Y, A) array."""
    arr = unpad(arr, prep.pads)
    arr = np.moveaxis(arr, arr.ndim - 3 + AXIAL, arr.ndim - 3 + prep.axial_axis)
    return uncrop_volume(arr, prep.box, prep.original_shape)


def _flip(x: torch.Tensor, axes: tuple[int, ...]) -> torch.Tensor:
    if not axes:
        return x
    return torch.flip(x, [x.ndim - 3 + a for a in axes])


def _forward_volume(
    model: torch.nn.Module, x: torch.Tensor, cfg: InferenceConfig
) -> tuple[torch.Tensor, torch.Tensor]:
    if cfg.tiling == "sliding":
        return sliding_window_forward(model, x, cfg.roi_size)
    seg, slc = model(x)
    return seg, slc


def sliding_window_forward(
    model: torch.nn.Module, x: torch.Tensor, roi_size: tuple[int, int, int]
) -> tuple[torch.Tensor, torch.Tensor]:
    """Tile the volume with 50%-overlap windows and average logits uniformly."""
    spatial = x.shape[2:]
    if any(s < r for s, r in zip(spatial, roi_size)):
        raise ShapeError(f"volume {tuple(spatial)} smaller than roi {roi_size}")
    origins_per_axis = []
    for s, r in zip(spatial, roi_size):
        step = max(r // 2, 1)
        origins = sorted({min(o, s - r) for o in range(0, s - r + step, step)} | {s - r})
        origins_per_axis.append(origins)

    seg_sum = torch.zeros((1, 3, *spatial), dtype=torch.float32)
    seg_cnt = torch.zeros((1, 1, *spatial), dtype=torch.float32)
    slc_sum = torch.zeros((1, 3, spatial[-1]), dtype=torch.float32)
    slc_cnt = torch.zeros((1, 1, spatial[-1]), dtype=torch.float32)
    for ox in origins_per_axis[0]:
        for oy in origins_per_axis[1]:
            for oz in origins_per_axis[2]:
                window = x[..., ox : ox + roi_size[0], oy : oy + roi_size[1], oz : oz + roi_size[2]]
                seg, slc = model(window)
                seg_sum[..., ox : ox + roi_size[0], oy : oy + roi_size[1], oz : oz + roi_size[2]] += seg
                seg_cnt[..., ox : ox + roi_size[0], oy : oy + roi_size[1], oz : oz + roi_size[2]] += 1
                slc_sum[..., oz : oz + roi_size[2]] += slc
                slc_cnt[..., oz : oz + roi_size[2]] += 1
    return seg_sum / seg_cnt, slc_sum / slc_cnt


def tta_ensemble_logits(
    models: list[torch.nn.Module],
    x: torch.Tensor,
    cfg: InferenceConfig = InferenceConfig(),
) -> tuple[torch.Tensor, torch.Tensor]:
    """Average (model, flip) forward passes back in the unflipped frame.

    Returns (seg logits (3, X, Y, A), slice logits (3, A)). With
    avg_space='probs' the averaged probabilities are mapped back through
    the logit function.
    """
    if not models:
        raise ConfigError("at least one model is required")
    if x.ndim == 4:
        x = x.unsqueeze(0)

    in_prob_space = cfg.avg_space == "probs"
    seg_acc = None
    slc_acc = None
    with torch.no_grad():
        for model in models:
            model.eval()
            for axes in cfg.tta_flips:
                seg, slc = _forward_volume(model, _flip(x, axes), cfg)
                seg = _flip(seg, axes)
                if AXIAL in axes:
                    slc = torch.flip(slc, [-1])
                if in_prob_space:
                    seg = torch.sigmoid(seg)
                    slc = torch.sigmoid(slc)
                seg_acc = seg if seg_acc is None else seg_acc + seg
                slc_acc = slc if slc_acc is None else slc_acc + slc
    n = len(models) * len(cfg.tta_flips)
    seg_mean = seg_acc / n
    slc_mean = slc_acc / n
    if in_prob_space:
        seg_mean = torch.logit(seg_mean, eps=1e-7)
        slc_mean = torch.logit(slc_mean, eps=1e-7)
    return seg_mean.squeeze(0), slc_mean.squeeze(0)


def threshold_and_gate(
    seg_logits: torch.Tensor,
    slice_logits: torch.Tensor,
    cfg: InferenceConfig = InferenceConfig(),
) -> RegionMask:
    """Sigmoid + binarize both branches; negative slices clear their region.

    Gating only ever removes voxels, so the gated mask is a voxelwise
    subset of the ungated one.
    """
    seg_probs = torch.sigmoid(seg_logits).numpy()
    mask = (seg_probs >= cfg.threshold).astype(np.uint8)
    if cfg.gate_enabled:
        keep = gate_decisions(slice_logits, cfg.threshold)
        mask *= keep[:, None, None, :].astype(np.uint8)
    return RegionMask(mask)


def gate_decisions(slice_logits: torch.Tensor, threshold: float = 0.5) -> np.ndarray:
    """(3, A) booleans: True where the slice classifier keeps the region."""
    probs = torch.sigmoid(slice_logits).numpy()
    return probs >= threshold


def remove_small_regions(mask: RegionMask, min_voxels: int) -> RegionMask:
    """Optional baseline: drop connected components below a voxel count."""
    if min_voxels <= 0:
        return mask
    out = mask.channels.copy()
    for c in range(out.shape[0]):
        labeled, n = ndimage.label(out[c])
        for comp in range(1, n + 1):
            sel = labeled == comp
            if int(sel.sum()) < min_voxels:
                out[c][sel] = 0
    return RegionMask(out)


@dataclass
class PredictionResult:
    labels: LabelVolume
    regions: RegionMask
    probabilities: np.ndarray  # (3, X, Y, Z) in original axis order
    slice_probs: np.ndarray  # (3, original axial extent)
    slice_keep: np.ndarray  # (3, original axial extent) bool
    affine: np.ndarray


def predict_case(
    volume: MultimodalVolume,
    models: list[torch.nn.Module],
    cfg: InferenceConfig = InferenceConfig(),
) -> PredictionResult:
    """Preprocess, run the TTA ensemble, threshold+gate, and restore geometry."""
    stride = max(getattr(m, "cfg").total_stride for m in models) if models else 16
    prep = prepare_input(volume, stride=stride)
    seg_logits, slice_logits = tta_ensemble_logits(models, prep.tensor, cfg)

    mask = threshold_and_gate(seg_logits, slice_logits, cfg)
    if cfg.min_region_size > 0:
        mask = remove_small_regions(mask, cfg.min_region_size)

    probs = torch.sigmoid(seg_logits).numpy().astype(np.float32)
    full_mask = restore_geometry(mask.channels, prep)
    full_probs = restore_geometry(probs, prep)

    # map per-slice decisions back to original axial indices
    a_orig = prep.original_shape[prep.axial_axis]
    slice_probs = np.zeros((3, a_orig), dtype=np.float32)
    keep = np.zeros((3, a_orig), dtype=bool)
    probs_padded = torch.sigmoid(slice_logits).numpy()
    pad_lo = prep.pads[AXIAL][0]
    crop_lo = prep.box.lo[prep.axial_axis]
    n_crop = prep.box.shape[prep.axial_axis]
    slice_probs[:, crop_lo : crop_lo + n_crop] = probs_padded[:, pad_lo : pad_lo + n_crop]
    keep[:, crop_lo : crop_lo + n_crop] = (
        probs_padded[:, pad_lo : pad_lo + n_crop] >= cfg.threshold
    )

    region_mask = RegionMask(full_mask)
    return PredictionResult(
        labels=regions_to_labels(region_mask),
        regions=region_mask,
        probabilities=full_probs,
        slice_probs=slice_probs,
        slice_keep=keep,
        affine=volume.affine,
    )


def without_gate(cfg: InferenceConfig) -> InferenceConfig:
    return replace(cfg, gate_enabled=False)
