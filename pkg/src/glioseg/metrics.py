"""Evaluation metrics: Dice, 95th-percentile Hausdorff distance, sensitivity,
specificity, computed per overlap region (WT, TC, ET).

HD95 definition used throughout: surfaces are the voxel-boundary point sets
(mask voxels with at least one 6-neighbor outside the mask, array borders
counting as outside), voxel centers scaled by spacing, directed
nearest-surface distances pooled over both directions, 95th percentile with
linear interpolation. If exactly one mask is empty a configurable sentinel
(373.13 mm, the standard challenge convention) is returned; 0 if both are
empty.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .data import REGIONS, LabelVolume, labels_to_regions
from .errors import GliosegError, ShapeError
from .nifti import read_nifti, spacing_from_affine

EMPTY_SENTINEL_MM = 373.13


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """Overlap score 2|P∩G| / (|P|+|G|); 1.0 when both masks are empty."""
    if pred.shape != gt.shape:
        raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / total


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Voxel coordinates of the mask boundary (6-connectivity erosion)."""
    m = mask.astype(bool)
    interior = ndimage.binary_erosion(m)
    return np.argwhere(m & ~interior)


def hd95(
    pred: np.ndarray,
    gt: np.ndarray,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
    empty_sentinel: float = EMPTY_SENTINEL_MM,
) -> float:
    if pred.shape != gt.shape:
        raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    p_any = bool(pred.any())
    g_any = bool(gt.any())
    if not p_any and not g_any:
        return 0.0
    if p_any != g_any:
        return float(empty_sentinel)

    sp = np.asarray(spacing, dtype=np.float64)
    p_surf = surface_voxels(pred).astype(np.float64) * sp
    g_surf = surface_voxels(gt).astype(np.float64) * sp
    d_pg = cKDTree(g_surf).query(p_surf)[0]
    d_gp = cKDTree(p_surf).query(g_surf)[0]
    return float(np.percentile(np.concatenate([d_pg, d_gp]), 95))


def sensitivity_specificity(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """(TP/(TP+FN), TN/(TN+FP)); degenerate denominators fall back to
    1.0 when the corresponding error count is zero, else 0.0."""
    if pred.shape != gt.shape:
        raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    tp = int((p & g).sum())
    fn = int((~p & g).sum())
    tn = int((~p & ~g).sum())
    fp = int((p & ~g).sum())
    sens = tp / (tp + fn) if (tp + fn) else (1.0 if fp == 0 else 0.0)
    spec = tn / (tn + fp) if (tn + fp) else (1.0 if fn == 0 else 0.0)
    return sens, spec


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    dice: dict[str, float]
    hd95: dict[str, float]
    sensitivity: dict[str, float]
    specificity: dict[str, float]


@dataclass
class EvaluationResult:
    cases: list[CaseMetrics] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def mean(self, metric: str, region: str) -> float:
        vals = [getattr(c, metric)[region] for c in self.cases]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def complete(self) -> bool:
        return not self.skipped


def case_metrics(
    case_id: str,
    pred: LabelVolume,
    gt: LabelVolume,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> CaseMetrics:
    pred_regions = labels_to_regions(pred)
    gt_regions = labels_to_regions(gt)
    dice, hd, sens, spec = {}, {}, {}, {}
    for i, region in enumerate(REGIONS):
        p = pred_regions.channels[i]
        g = gt_regions.channels[i]
        dice[region] = dice_score(p, g)
        hd[region] = hd95(p, g, spacing)
        sens[region], spec[region] = sensitivity_specificity(p, g)
    return CaseMetrics(case_id, dice, hd, sens, spec)


def _case_id(path: Path) -> str:
    name = path.name
    for ext in (".nii.gz", ".nii"):
        if name.endswith(ext):
            return name[: -len(ext)]
    return path.stem


def evaluate_dataset(pred_dir: str | Path, gt_dir: str | Path) -> EvaluationResult:
    """Compare label maps in pred_dir against same-named ground truth in gt_dir.

    Cases without a matching prediction are recorded as skipped.
    """
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    if not gt_dir.is_dir():
        raise GliosegError(f"ground-truth directory not found: {gt_dir}")
    if not pred_dir.is_dir():
        raise GliosegError(f"prediction directory not found: {pred_dir}")

    preds = {_case_id(p): p for p in sorted(pred_dir.iterdir()) if p.name.endswith((".nii", ".nii.gz"))}
    result = EvaluationResult()
    for gt_path in sorted(gt_dir.iterdir()):
        if not gt_path.name.endswith((".nii", ".nii.gz")):
            continue
        case_id = _case_id(gt_path)
        if case_id not in preds:
            result.skipped.append(case_id)
            continue
        gt_img = read_nifti(gt_path)
        pred_img = read_nifti(preds[case_id])
        gt_lv = LabelVolume(np.rint(gt_img.data).astype(np.int64))
        pred_lv = LabelVolume(np.rint(pred_img.data).astype(np.int64))
        if gt_lv.shape != pred_lv.shape:
            raise ShapeError(
                f"case {case_id}: prediction shape {pred_lv.shape} != gt shape {gt_lv.shape}"
            )
        spacing = spacing_from_affine(gt_img.affine)
        result.cases.append(case_metrics(case_id, pred_lv, gt_lv, spacing))
    return result


def write_metrics_csv(result: EvaluationResult, out_path: str | Path) -> None:
    """Per-case rows plus a mean row; region-major columns as in the
    challenge summary tables (ET, WT, TC)."""
    col_regions = ("et", "wt", "tc")
    header = ["case_id"]
    for metric in ("dice", "hd95", "sensitivity", "specificity"):
        header += [f"{metric}_{r}" for r in col_regions]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in result.cases:
            row = [c.case_id]
            for metric in ("dice", "hd95", "sensitivity", "specificity"):
                row += [f"{getattr(c, metric)[r]:.4f}" for r in col_regions]
            writer.writerow(row)
        mean_row = ["mean"]
        for metric in ("dice", "hd95", "sensitivity", "specificity"):
            mean_row += [f"{result.mean(metric, r):.4f}" for r in col_regions]
        writer.writerow(mean_row)


def write_summary_csv(
    result: EvaluationResult, out_path: str | Path, method: str = "glioseg"
) -> None:
    """One-line summary shaped like the challenge leaderboard tables."""
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["Method", "Dice_ET", "Dice_WT", "Dice_TC", "HD95_ET", "HD95_WT", "HD95_TC"]
        )
        writer.writerow(
            [method]
            + [f"{result.mean('dice', r):.4f}" for r in ("et", "wt", "tc")]
            + [f"{result.mean('hd95', r):.4f}" for r in ("et", "wt", "tc")]
        )
