"""Foreground cropping, intensity normalization, and training augmentations.

The training pipeline applies, in order: zero-intensity crop, per-modality
z-score over foreground voxels, then (at train time) random flips, random
intensity scale, random intensity shift, and a random spatial crop. The two
intensity augmentations are gated by independent probability draws; the
published description leaves joint-vs-independent gating open and
independent draws are used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CropBox, MultimodalVolume, RegionMask
from .errors import ConfigError, DegenerateIntensity, EmptyVolume, ShapeError


@dataclass(frozen=True)
class AugmentConfig:
    """Training-time augmentation parameters.

    Attributes:
        flip_prob: Per-spatial-axis mirror probability.
        scale_range: Multiplicative intensity factor interval.
        shift_range: Additive intensity offset interval (post-normalization units).
        intensity_aug_prob: Probability each intensity augmentation is applied.
        crop_size: Spatial size of the random training crop.
        seed: Base seed for the augmentation stream; None derives it from
            the training seed.
    """

    flip_prob: float = 0.5
    scale_range: tuple[float, float] = (0.9, 1.1)
    shift_range: tuple[float, float] = (-0.1, 0.1)
    intensity_aug_prob: float = 0.8
    crop_size: tuple[int, int, int] = (128, 128, 96)
    seed: int | None = None

    def __post_init__(self):
        for name, p in (("flip_prob", self.flip_prob), ("intensity_aug_prob", self.intensity_aug_prob)):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if not 0.0 < self.scale_range[0] <= self.scale_range[1]:
            raise ConfigError(f"scale_range must be a positive interval, got {self.scale_range}")
        if self.shift_range[0] > self.shift_range[1]:
            raise ConfigError(f"shift_range must be ordered, got {self.shift_range}")
        if len(self.crop_size) != 3 or any(c <= 0 for c in self.crop_size):
            raise ConfigError(f"crop_size components must be positive, got {self.crop_size}")


def compute_foreground_crop(v: MultimodalVolume) -> CropBox:
    """Tightest axis-aligned box containing every voxel where any modality is nonzero."""
    nonzero = np.any(v.modalities != 0, axis=0)
    if not nonzero.any():
        raise EmptyVolume("all modalities are identically zero")
    lo, hi = [], []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        profile = np.any(nonzero, axis=other)
        idx = np.flatnonzero(profile)
        lo.append(int(idx[0]))
        hi.append(int(idx[-1]))
    return CropBox(lo=tuple(lo), hi=tuple(hi))


def crop_volume(arr: np.ndarray, box: CropBox) -> np.ndarray:
    """Apply a crop box to a (..., X, Y, Z) array."""
    return arr[(..., *box.slices)]


def uncrop_volume(arr: np.ndarray, box: CropBox, full_shape: tuple[int, int, int]) -> np.ndarray:
    """Place a cropped (..., X, Y, Z) array back into a zero canvas of full_shape."""
    if arr.shape[-3:] != box.shape:
        raise ShapeError(f"array shape {arr.shape[-3:]} does not match crop box {box.shape}")
    out = np.zeros(arr.shape[:-3] + tuple(full_shape), dtype=arr.dtype)
    out[(..., *box.slices)] = arr
    return out


def normalize(v: MultimodalVolume) -> MultimodalVolume:
    """Z-score each modality over its nonzero voxels; zero voxels stay zero."""
    out = np.zeros_like(v.modalities, dtype=np.float32)
    for i in range(v.modalities.shape[0]):
        grid = v.modalities[i]
        fg = grid != 0
        if not fg.any():
            # fully zero modality: nothing to standardize, keep zeros
            continue
        vals = grid[fg].astype(np.float64)
        std = vals.std()
        if std == 0.0:
            raise DegenerateIntensity(f"modality {i} has constant foreground intensity")
        out[i][fg] = ((vals - vals.mean()) / std).astype(np.float32)
    return v.with_modalities(out)


def pad_to_multiple(
    arr: np.ndarray, multiple: int
) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """Symmetrically zero-pad spatial dims up to the next multiple.

    Returns the padded array and the per-axis (before, after) pad widths,
    which invert the operation exactly.
    """
    pads = []
    for extent in arr.shape[-3:]:
        target = -(-extent // multiple) * multiple
        total = target - extent
        pads.append((total // 2, total - total // 2))
    widths = ((0, 0),) * (arr.ndim - 3) + tuple(pads)
    return np.pad(arr, widths, mode="constant"), tuple(pads)


def unpad(arr: np.ndarray, pads: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Invert pad_to_multiple."""
    slices = tuple(
        slice(b, arr.shape[arr.ndim - 3 + i] - a) for i, (b, a) in enumerate(pads)
    )
    return arr[(..., *slices)]


def pad_to_size(arr: np.ndarray, size: tuple[int, int, int]) -> np.ndarray:
    """Symmetrically zero-pad spatial dims up to at least the given size."""
    pads = []
    for extent, target in zip(arr.shape[-3:], size):
        total = max(0, target - extent)
        pads.append((total // 2, total - total // 2))
    widths = ((0, 0),) * (arr.ndim - 3) + tuple(pads)
    return np.pad(arr, widths, mode="constant")


def flip_arrays(axes: tuple[int, ...], *arrays: np.ndarray) -> list[np.ndarray]:
    """Mirror each (..., X, Y, Z) array along the given spatial axes."""
    out = []
    for arr in arrays:
        dims = tuple(arr.ndim - 3 + a for a in axes)
        out.append(np.flip(arr, dims) if dims else arr)
    return out


def random_crop_origin(
    shape: tuple[int, int, int], crop_size: tuple[int, int, int], rng: np.random.Generator
) -> tuple[int, int, int]:
    """Uniform draw over valid crop origins."""
    origin = []
    for extent, c in zip(shape, crop_size):
        if extent < c:
            raise ShapeError(f"extent {extent} smaller than crop size {c}")
        origin.append(int(rng.integers(0, extent - c + 1)))
    return tuple(origin)


def crop_at(arr: np.ndarray, origin: tuple[int, int, int], size: tuple[int, int, int]) -> np.ndarray:
    slices = tuple(slice(o, o + s) for o, s in zip(origin, size))
    return arr[(..., *slices)]


def augment(
    v: MultimodalVolume,
    m: RegionMask,
    cfg: AugmentConfig,
    rng: np.random.Generator,
) -> tuple[MultimodalVolume, RegionMask]:
    """Apply flip -> intensity scale -> intensity shift -> random crop.

    Flips and the crop act identically on image and mask; intensity ops
    touch the image only. Deterministic given the generator state. Volumes
    smaller than crop_size are zero-padded symmetrically first.
    """
    if v.shape != m.shape:
        raise ShapeError(f"image shape {v.shape} != mask shape {m.shape}")

    image = v.modalities
    mask = m.channels

    flip_axes = tuple(a for a in range(3) if rng.random() < cfg.flip_prob)
    image, mask = flip_arrays(flip_axes, image, mask)

    if rng.random() < cfg.intensity_aug_prob:
        factor = rng.uniform(*cfg.scale_range)
        image = image * factor
    if rng.random() < cfg.intensity_aug_prob:
        offset = rng.uniform(*cfg.shift_range)
        image = image + offset

    if any(e < c for e, c in zip(image.shape[-3:], cfg.crop_size)):
        image = pad_to_size(image, cfg.crop_size)
        mask = pad_to_size(mask, cfg.crop_size)

    origin = random_crop_origin(image.shape[-3:], cfg.crop_size, rng)
    image = crop_at(image, origin, cfg.crop_size)
    mask = crop_at(mask, origin, cfg.crop_size)

    return (
        v.with_modalities(np.ascontiguousarray(image, dtype=np.float32)),
        RegionMask(np.ascontiguousarray(mask)),
    )
