"""Case ingestion, label/region mapping, and the shared geometric types.

Label convention (BraTS numeric codes): 1 = necrotic/non-enhancing core,
2 = peritumoral edema, 4 = enhancing tumor. The three overlapping
evaluation regions are derived as WT = {1,2,4}, TC = {1,4}, ET = {4},
in that channel order everywhere in the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import GeometryMismatch, GliosegError, InvalidLabel, MissingModality
from .nifti import axial_axis_from_affine, read_nifti, spacing_from_affine

MODALITIES = ("t1", "t1gd", "t2", "flair")
REGIONS = ("wt", "tc", "et")
VALID_LABELS = frozenset({0, 1, 2, 4})

# Filename suffixes tried by directory-based discovery. BraTS names its
# post-contrast T1 file "t1ce"; both spellings are accepted.
DEFAULT_PATTERNS: dict[str, tuple[str, ...]] = {
    "t1": ("_t1.nii", "_t1.nii.gz"),
    "t1gd": ("_t1gd.nii", "_t1gd.nii.gz", "_t1ce.nii", "_t1ce.nii.gz"),
    "t2": ("_t2.nii", "_t2.nii.gz"),
    "flair": ("_flair.nii", "_flair.nii.gz"),
    "labels": ("_seg.nii", "_seg.nii.gz"),
}


@dataclass(frozen=True)
class MultimodalVolume:
    """Four co-registered 3D scalar grids plus geometry metadata.

    ``modalities`` is stacked (4, X, Y, Z) in the order t1, t1gd, t2,
    flair. Treated as immutable after construction.
    """

    modalities: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))
    axial_axis: int = 2

    def __post_init__(self):
        if self.modalities.ndim != 4 or self.modalities.shape[0] != len(MODALITIES):
            raise GeometryMismatch(
                f"expected (4, X, Y, Z) modality stack, got {self.modalities.shape}"
            )
        if not np.all(np.isfinite(self.modalities)):
            raise GliosegError("modality grids contain non-finite values")
        if any(s <= 0 for s in self.spacing):
            raise GeometryMismatch(f"spacing must be strictly positive, got {self.spacing}")
        if self.axial_axis not in (0, 1, 2):
            raise GeometryMismatch(f"axial_axis must be 0, 1 or 2, got {self.axial_axis}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.modalities.shape[1:]

    @property
    def t1(self) -> np.ndarray:
        return self.modalities[0]

    @property
    def t1gd(self) -> np.ndarray:
        return self.modalities[1]

    @property
    def t2(self) -> np.ndarray:
        return self.modalities[2]

    @property
    def flair(self) -> np.ndarray:
        return self.modalities[3]

    def with_modalities(self, modalities: np.ndarray) -> "MultimodalVolume":
        return replace(self, modalities=modalities)


@dataclass(frozen=True)
class LabelVolume:
    """Integer 3D grid with values restricted to {0, 1, 2, 4}."""

    labels: np.ndarray

    def __post_init__(self):
        if self.labels.ndim != 3:
            raise GeometryMismatch(f"labels must be 3D, got shape {self.labels.shape}")
        present = set(np.unique(self.labels).tolist())
        bad = present - VALID_LABELS
        if bad:
            raise InvalidLabel(f"label values outside {{0,1,2,4}}: {sorted(bad)}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class RegionMask:
    """Three binary 3D grids in region order (WT, TC, ET)."""

    channels: np.ndarray

    def __post_init__(self):
        if self.channels.ndim != 4 or self.channels.shape[0] != len(REGIONS):
            raise GeometryMismatch(
                f"expected (3, X, Y, Z) region stack, got {self.channels.shape}"
            )
        vals = np.unique(self.channels)
        if not np.all(np.isin(vals, (0, 1))):
            raise GliosegError(f"region mask values must be binary, got {vals}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels.shape[1:]

    @property
    def wt(self) -> np.ndarray:
        return self.channels[0]

    @property
    def tc(self) -> np.ndarray:
        return self.channels[1]

    @property
    def et(self) -> np.ndarray:
        return self.channels[2]


@dataclass(frozen=True)
class CropBox:
    """Inclusive voxel index bounds per axis."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise GeometryMismatch(f"crop box lo {self.lo} exceeds hi {self.hi}")
        if any(l < 0 for l in self.lo):
            raise GeometryMismatch(f"crop box lo {self.lo} is negative")

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(l, h + 1) for l, h in zip(self.lo, self.hi))

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))


def labels_to_regions(lv: LabelVolume) -> RegionMask:
    """Expand a label volume into the nested (WT, TC, ET) region stack."""
    lab = lv.labels
    wt = np.isin(lab, (1, 2, 4))
    tc = np.isin(lab, (1, 4))
    et = lab == 4
    return RegionMask(np.stack([wt, tc, et]).astype(np.uint8))


def regions_to_labels(rm: RegionMask) -> LabelVolume:
    """Collapse region channels to a single label map.

    Priority ET > TC > WT, so thresholded network output that violates
    nesting still yields a single-valued map.
    """
    wt, tc, et = rm.channels.astype(bool)
    lab = np.zeros(rm.shape, dtype=np.uint8)
    lab[wt] = 2
    lab[tc] = 1
    lab[et] = 4
    return LabelVolume(lab)


def _load_grid(path: Path):
    img = read_nifti(path)
    return img.data, img.affine


def load_case_from_paths(
    modality_paths: dict[str, str | Path], label_path: str | Path | None = None
) -> tuple[MultimodalVolume, LabelVolume | None]:
    """Load one case given explicit per-modality file paths."""
    missing = [m for m in MODALITIES if m not in modality_paths]
    if missing:
        raise MissingModality(f"missing modalities: {missing}")

    grids, affines = [], []
    for mod in MODALITIES:
        path = Path(modality_paths[mod])
        if not path.exists():
            raise MissingModality(f"{mod} file not found: {path}")
        data, affine = _load_grid(path)
        grids.append(np.asarray(data, dtype=np.float32))
        affines.append(affine)

    shapes = {g.shape for g in grids}
    if len(shapes) != 1:
        raise GeometryMismatch(f"modality shapes differ: {sorted(shapes)}")
    spacings = {spacing_from_affine(a) for a in affines}
    if len({tuple(np.round(s, 5)) for s in spacings}) != 1:
        raise GeometryMismatch(f"modality spacings differ: {sorted(spacings)}")

    affine = affines[0]
    volume = MultimodalVolume(
        modalities=np.stack(grids),
        spacing=spacing_from_affine(affine),
        affine=affine,
        axial_axis=axial_axis_from_affine(affine),
    )

    labels = None
    if label_path is not None:
        data, _ = _load_grid(Path(label_path))
        lab = np.rint(np.asarray(data)).astype(np.int64)
        labels = LabelVolume(lab)
        if labels.shape != volume.shape:
            raise GeometryMismatch(
                f"label shape {labels.shape} does not match image shape {volume.shape}"
            )
    return volume, labels


def load_case(
    case_directory: str | Path,
    patterns: dict[str, tuple[str, ...]] = DEFAULT_PATTERNS,
) -> tuple[MultimodalVolume, LabelVolume | None]:
    """Load a case by filename-suffix discovery inside one directory."""
    case_dir = Path(case_directory)
    found: dict[str, Path] = {}
    files = sorted(p for p in case_dir.iterdir() if p.is_file())
    for key, suffixes in patterns.items():
        for f in files:
            if any(f.name.endswith(s) for s in suffixes):
                found[key] = f
                break
    label_path = found.pop("labels", None)
    return load_case_from_paths(found, label_path)


@dataclass(frozen=True)
class CaseEntry:
    case_id: str
    modality_paths: dict[str, Path]
    label_path: Path | None = None

    def load(self) -> tuple[MultimodalVolume, LabelVolume | None]:
        return load_case_from_paths(self.modality_paths, self.label_path)


def load_manifest(path: str | Path) -> list[CaseEntry]:
    """Read a dataset manifest: JSON mapping case id -> modality file paths.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    if "cases" not in raw or not isinstance(raw["cases"], dict):
        raise GliosegError(f"{path}: manifest must contain a 'cases' mapping")
    base = path.parent
    entries = []
    for case_id, rec in sorted(raw["cases"].items()):
        mods = {m: base / rec[m] for m in MODALITIES if m in rec}
        missing = [m for m in MODALITIES if m not in mods]
        if missing:
            raise MissingModality(f"case {case_id}: manifest lacks {missing}")
        label = base / rec["labels"] if rec.get("labels") else None
        entries.append(CaseEntry(case_id=case_id, modality_paths=mods, label_path=label))
    return entries


def write_manifest(path: str | Path, cases: dict[str, dict[str, str]]) -> None:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump({"cases": cases}, fh, indent=2, sort_keys=True)
        fh.write("\n")
