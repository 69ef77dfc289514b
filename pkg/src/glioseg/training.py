"""Training: fold construction, the Adam/schedule loop, logging, checkpoints.

Every run is deterministic given config + seed on a single device: parameter
init is seeded per fold, and each step's batch sampling and augmentations
draw from a generator keyed by (seed, fold, step).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from .data import CaseEntry, MultimodalVolume, RegionMask, labels_to_regions
from .errors import ConfigError, NumericalDivergence
from .inference import AXIAL
from .losses import LossConfig, slice_presence, total_loss
from .metrics import dice_score
from .models import NetworkConfig, build_model, save_checkpoint
from .preprocess import AugmentConfig, augment, compute_foreground_crop, crop_volume, normalize, pad_to_multiple, unpad
from .schedules import LrSchedule, SchedulerConfig

ARCH_BATCH_SIZES = {"bifpn": 4, "unetpp": 2}
ARCH_PATCH_SIZES = {"bifpn": (128, 128, 96), "unetpp": (128, 128, 128)}


@dataclass(frozen=True)
class TrainConfig:
    architecture: str = "bifpn"
    batch_size: int | None = None  # None: architecture default (4 / 2)
    folds: int = 5
    seed: int = 0
    adam_betas: tuple[float, float] = (0.9, 0.999)

    def __post_init__(self):
        if self.architecture not in ARCH_BATCH_SIZES:
            raise ConfigError(
                f"architecture must be one of {tuple(ARCH_BATCH_SIZES)}, got {self.architecture!r}"
            )
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.folds < 2:
            raise ConfigError(f"cross-validation needs at least 2 folds, got {self.folds}")

    @property
    def resolved_batch_size(self) -> int:
        return self.batch_size or ARCH_BATCH_SIZES[self.architecture]


def make_folds(
    case_ids: Sequence[str], k: int = 5, seed: int = 0
) -> list[tuple[list[str], list[str]]]:
    """Disjoint near-equal validation splits; deterministic in the seed."""
    ids = sorted(case_ids)
    if k < 2:
        raise ConfigError("k must be >= 2 so every fold has validation cases")
    if k > len(ids):
        raise ConfigError(f"cannot make {k} folds from {len(ids)} cases")
    rng = np.random.default_rng(seed)
    perm = [ids[i] for i in rng.permutation(len(ids))]
    chunks = np.array_split(np.arange(len(perm)), k)
    folds = []
    for chunk in chunks:
        val = sorted(perm[i] for i in chunk)
        train = sorted(set(ids) - set(val))
        folds.append((train, val))
    return folds


@dataclass
class PreparedCase:
    """A case after crop + normalization, axial moved to the last axis."""

    case_id: str
    volume: MultimodalVolume
    regions: RegionMask


def prepare_case(entry: CaseEntry) -> PreparedCase:
    volume, labels = entry.load()
    if labels is None:
        raise ConfigError(f"case {entry.case_id} has no labels; cannot train on it")
    box = compute_foreground_crop(volume)
    image = normalize(volume.with_modalities(crop_volume(volume.modalities, box)))
    regions = crop_volume(labels_to_regions(labels).channels, box)
    img = np.moveaxis(image.modalities, 1 + volume.axial_axis, 3)
    reg = np.moveaxis(regions, 1 + volume.axial_axis, 3)
    spacing = list(volume.spacing)
    spacing.append(spacing.pop(volume.axial_axis))
    prepared = MultimodalVolume(
        modalities=np.ascontiguousarray(img),
        spacing=tuple(spacing),
        affine=volume.affine,
        axial_axis=AXIAL,
    )
    return PreparedCase(entry.case_id, prepared, RegionMask(np.ascontiguousarray(reg)))


@dataclass
class TrainResult:
    fold: int
    log_path: Path
    best_checkpoint: Path
    last_checkpoint: Path
    best_val_dice: float
    final_val_loss: float
    steps: int


LogCallback = Callable[[dict], None]


def _log(fh, callbacks: Iterable[LogCallback], record: dict) -> None:
    fh.write(json.dumps(record) + "\n")
    fh.flush()
    for cb in callbacks:
        cb(record)


def _make_batch(
    cases: list[PreparedCase], aug_cfg: AugmentConfig, batch_size: int, rng: np.random.Generator
) -> tuple[torch.Tensor, torch.Tensor, list[str]]:
    images, regions, ids = [], [], []
    for _ in range(batch_size):
        case = cases[int(rng.integers(0, len(cases)))]
        vol, mask = augment(case.volume, case.regions, aug_cfg, rng)
        images.append(torch.from_numpy(vol.modalities))
        regions.append(torch.from_numpy(mask.channels.astype(np.float32)))
        ids.append(case.case_id)
    return torch.stack(images), torch.stack(regions), ids


@torch.no_grad()
def validate(
    model: torch.nn.Module,
    cases: list[PreparedCase],
    loss_cfg: LossConfig,
    stride: int,
    device: str = "cpu",
) -> dict:
    """Plain full-volume forward on each case: mean region Dice and loss."""
    model.eval()
    dices = {"wt": [], "tc": [], "et": []}
    losses = []
    for case in cases:
        img, pads = pad_to_multiple(case.volume.modalities, stride)
        reg_padded, _ = pad_to_multiple(case.regions.channels.astype(np.float32), stride)
        x = torch.from_numpy(np.ascontiguousarray(img)).unsqueeze(0).to(device)
        reg_t = torch.from_numpy(np.ascontiguousarray(reg_padded)).unsqueeze(0).to(device)
        seg_logits, slice_logits = model(x)
        slice_gt = slice_presence(reg_t)
        loss, _ = total_loss(seg_logits, slice_logits, reg_t, slice_gt, loss_cfg)
        losses.append(float(loss))
        pred = (torch.sigmoid(seg_logits)[0].cpu().numpy() >= 0.5).astype(np.uint8)
        pred = unpad(pred, pads)
        for i, region in enumerate(("wt", "tc", "et")):
            dices[region].append(dice_score(pred[i], case.regions.channels[i]))
    mean_dice = {r: float(np.mean(v)) for r, v in dices.items()}
    return {
        "val_loss": float(np.mean(losses)),
        "val_dice": mean_dice,
        "mean_val_dice": float(np.mean(list(mean_dice.values()))),
    }


def fit_split(
    train_cases: list[PreparedCase],
    val_cases: list[PreparedCase],
    train_cfg: TrainConfig,
    sched_cfg: SchedulerConfig,
    loss_cfg: LossConfig,
    aug_cfg: AugmentConfig,
    net_cfg: NetworkConfig,
    out_dir: str | Path,
    fold: int = 0,
    device: str = "cpu",
    callbacks: Iterable[LogCallback] = (),
) -> TrainResult:
    """Train on an explicit train/validation split."""
    if not train_cases:
        raise ConfigError("no training cases")
    stride = 2 ** len(net_cfg.encoder_channels)
    if any(c % stride != 0 for c in aug_cfg.crop_size):
        raise ConfigError(
            f"crop_size {aug_cfg.crop_size} must be divisible by the network stride {stride}"
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"train_fold{fold}.jsonl"
    best_path = out_dir / f"fold{fold}_best.pt"
    last_path = out_dir / f"fold{fold}_last.pt"

    torch.manual_seed(train_cfg.seed * 1000 + fold)
    model = build_model(train_cfg.architecture, net_cfg).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=sched_cfg.base_lr, betas=train_cfg.adam_betas)

    batch_size = train_cfg.resolved_batch_size
    bpe = sched_cfg.batches_per_epoch or max(1, -(-len(train_cases) // batch_size))
    schedule = LrSchedule(sched_cfg, batches_per_epoch=bpe)
    aug_seed = aug_cfg.seed if aug_cfg.seed is not None else train_cfg.seed

    best_dice = -1.0
    final_val_loss = float("nan")
    step = 0
    t0 = time.time()
    with open(log_path, "w") as fh:
        for epoch in range(sched_cfg.total_epochs):
            model.train()
            for _ in range(bpe):
                lr = schedule.lr_for_step(step)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                rng = np.random.default_rng(
                    np.random.SeedSequence((aug_seed, fold, step))
                )
                images, regions, batch_ids = _make_batch(train_cases, aug_cfg, batch_size, rng)
                images = images.to(device)
                regions = regions.to(device)
                slice_gt = slice_presence(regions)

                optimizer.zero_grad()
                seg_logits, slice_logits = model(images)
                loss, parts = total_loss(seg_logits, slice_logits, regions, slice_gt, loss_cfg)
                if not torch.isfinite(loss):
                    raise NumericalDivergence(
                        f"non-finite loss at fold {fold} epoch {epoch} step {step}",
                        batch_id=f"fold{fold}-epoch{epoch}-step{step}:{','.join(batch_ids)}",
                    )
                loss.backward()
                optimizer.step()

                _log(fh, callbacks, {
                    "event": "step",
                    "fold": fold,
                    "epoch": epoch,
                    "step": step,
                    "lr": lr,
                    "loss": float(loss.detach()),
                    **parts,
                })
                step += 1

            if val_cases:
                stats = validate(model, val_cases, loss_cfg, stride, device)
                final_val_loss = stats["val_loss"]
                _log(fh, callbacks, {"event": "epoch", "fold": fold, "epoch": epoch, **stats})
                if stats["mean_val_dice"] > best_dice:
                    best_dice = stats["mean_val_dice"]
                    save_checkpoint(best_path, model, train_cfg.architecture)

        save_checkpoint(last_path, model, train_cfg.architecture)
        if not best_path.exists():
            save_checkpoint(best_path, model, train_cfg.architecture)
        _log(fh, callbacks, {
            "event": "done",
            "fold": fold,
            "steps": step,
            "best_val_dice": best_dice,
            "seconds": round(time.time() - t0, 3),
        })

    return TrainResult(
        fold=fold,
        log_path=log_path,
        best_checkpoint=best_path,
        last_checkpoint=last_path,
        best_val_dice=best_dice,
        final_val_loss=final_val_loss,
        steps=step,
    )


def fit(
    entries: list[CaseEntry],
    train_cfg: TrainConfig,
    sched_cfg: SchedulerConfig,
    loss_cfg: LossConfig,
    aug_cfg: AugmentConfig,
    net_cfg: NetworkConfig,
    out_dir: str | Path,
    fold_index: int = 0,
    device: str = "cpu",
    callbacks: Iterable[LogCallback] = (),
) -> TrainResult:
    """Split the dataset into folds and train the selected one."""
    folds = make_folds([e.case_id for e in entries], k=train_cfg.folds, seed=train_cfg.seed)
    if not 0 <= fold_index < len(folds):
        raise ConfigError(f"fold_index {fold_index} out of range for {len(folds)} folds")
    train_ids, val_ids = folds[fold_index]
    by_id = {e.case_id: e for e in entries}
    train_cases = [prepare_case(by_id[i]) for i in train_ids]
    val_cases = [prepare_case(by_id[i]) for i in val_ids]
    return fit_split(
        train_cases, val_cases, train_cfg, sched_cfg, loss_cfg, aug_cfg, net_cfg,
        out_dir, fold=fold_index, device=device, callbacks=callbacks,
    )
