"""Synthetic desk-scale dataset: nested ellipsoidal tumors in a fake brain.

Each case is a smooth ellipsoidal "brain" of nonzero intensity on a zero
background, containing three nested tumor ellipsoids (whole tumor, core,
enhancing core). Modality contrast mimics the real acquisition behavior:
the whole tumor is brightest in FLAIR, the core in T2, and the enhancing
core in T1Gd. Generation is fully deterministic in the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import MODALITIES, LabelVolume, MultimodalVolume, write_manifest
from .errors import ConfigError
from .nifti import write_nifti


@dataclass(frozen=True)
class SynthConfig:
    shape: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tumor_fraction: tuple[float, float] = (0.015, 0.08)
    noise_sigma: float = 0.05

    def __post_init__(self):
        if any(s < 16 for s in self.shape):
            raise ConfigError(f"synthetic volumes must be at least 16 voxels per axis, got {self.shape}")
        lo, hi = self.tumor_fraction
        if not 0 < lo <= hi < 0.5:
            raise ConfigError(f"tumor_fraction band must lie in (0, 0.5), got {self.tumor_fraction}")


def _ellipsoid(shape, center, radii) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, s) for s in shape)]
    acc = np.zeros(shape, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        acc = acc + ((g - c) / r) ** 2
    return acc <= 1.0


def generate_case(
    rng: np.random.Generator, cfg: SynthConfig = SynthConfig()
) -> tuple[MultimodalVolume, LabelVolume]:
    """One multimodal volume with nested tumor labels {0, 1, 2, 4}."""
    shape = cfg.shape
    n_vox = float(np.prod(shape))

    brain_radii = np.array([0.42 * s for s in shape])
    brain_center = np.array([s / 2 for s in shape]) + rng.uniform(-1.5, 1.5, 3)
    brain = _ellipsoid(shape, brain_center, brain_radii)

    # whole-tumor radius from a target volume fraction of the full grid
    frac = rng.uniform(*cfg.tumor_fraction)
    base_r = (3.0 * frac * n_vox / (4.0 * np.pi)) ** (1.0 / 3.0)
    wt_radii = base_r * rng.uniform(0.9, 1.1, 3)
    margin = wt_radii.max() + 2.0
    lo = brain_center - (brain_radii - margin)
    hi = brain_center + (brain_radii - margin)
    center = rng.uniform(np.minimum(lo, hi), np.maximum(lo, hi))

    wt = _ellipsoid(shape, center, wt_radii) & brain
    tc = _ellipsoid(shape, center, wt_radii * rng.uniform(0.55, 0.75)) & wt
    et = _ellipsoid(shape, center, wt_radii * rng.uniform(0.45, 0.7) * 0.6) & tc

    labels = np.zeros(shape, dtype=np.uint8)
    labels[wt] = 2
    labels[tc] = 1
    labels[et] = 4

    def modality(tumor_boosts):
        img = np.zeros(shape, dtype=np.float32)
        base = 1.0 + cfg.noise_sigma * rng.standard_normal(shape)
        img[brain] = np.clip(base, 0.3, None)[brain]
        for mask, boost in tumor_boosts:
            img[mask] += boost
        return img

    t1 = modality([(wt, -0.25)])
    t1gd = modality([(wt, -0.1), (et, 1.6)])
    t2 = modality([(wt, 0.4), (tc, 1.1)])
    flair = modality([(wt, 1.5)])

    affine = np.diag([*cfg.spacing, 1.0])
    volume = MultimodalVolume(
        modalities=np.stack([t1, t1gd, t2, flair]),
        spacing=cfg.spacing,
        affine=affine,
        axial_axis=2,
    )
    return volume, LabelVolume(labels)


def write_dataset(
    out_dir: str | Path,
    n_cases: int,
    seed: int,
    cfg: SynthConfig = SynthConfig(),
    with_labels: bool = True,
) -> Path:
    """Generate n synthetic cases plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest: dict[str, dict[str, str]] = {}
    for idx in range(n_cases):
        case_id = f"case_{idx:03d}"
        case_dir = out_dir / case_id
        case_dir.mkdir(exist_ok=True)
        volume, labels = generate_case(rng, cfg)
        rec = {}
        for m, grid in zip(MODALITIES, volume.modalities):
            fname = f"{case_id}_{m}.nii"
            write_nifti(case_dir / fname, grid, volume.affine)
            rec[m] = f"{case_id}/{fname}"
        if with_labels:
            fname = f"{case_id}_seg.nii"
            write_nifti(case_dir / fname, labels.labels, volume.affine)
            rec["labels"] = f"{case_id}/{fname}"
        manifest[case_id] = rec
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, manifest)
    return manifest_path
