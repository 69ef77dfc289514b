"""Dual-branch 3D brain tumor segmentation with slice-classification gating."""

__version__ = "0.1.0"

from .data import (
    CropBox,
    LabelVolume,
    MultimodalVolume,
    RegionMask,
    labels_to_regions,
    load_case,
    load_manifest,
    regions_to_labels,
)
from .errors import GliosegError
from .inference import InferenceConfig, predict_case, threshold_and_gate, tta_ensemble_logits
from .losses import LossConfig, bce_loss, dice_loss, focal_loss, total_loss
from .metrics import dice_score, evaluate_dataset, hd95, sensitivity_specificity
from .models import NetworkConfig, build_model, count_parameters, load_checkpoint, save_checkpoint
from .preprocess import AugmentConfig, augment, compute_foreground_crop, normalize
from .schedules import SchedulerConfig, cosine_lr, poly_lr, warmup_lr
from .training import TrainConfig, fit, make_folds

__all__ = [
    "AugmentConfig",
    "CropBox",
    "GliosegError",
    "InferenceConfig",
    "LabelVolume",
    "LossConfig",
    "MultimodalVolume",
    "NetworkConfig",
    "RegionMask",
    "SchedulerConfig",
    "TrainConfig",
    "augment",
    "bce_loss",
    "build_model",
    "compute_foreground_crop",
    "cosine_lr",
    "count_parameters",
    "dice_loss",
    "dice_score",
    "evaluate_dataset",
    "fit",
    "focal_loss",
    "hd95",
    "labels_to_regions",
    "load_case",
    "load_checkpoint",
    "load_manifest",
    "make_folds",
    "normalize",
    "poly_lr",
    "predict_case",
    "regions_to_labels",
    "save_checkpoint",
    "sensitivity_specificity",
    "threshold_and_gate",
    "total_loss",
    "tta_ensemble_logits",
    "warmup_lr",
]
