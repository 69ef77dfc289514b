"""Learning-rate schedules: cosine, polynomial decay, and linear warm-up."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

SCHEDULE_KINDS = ("cosine", "polynomial")


@dataclass(frozen=True)
class SchedulerConfig:
    """Learning-rate schedule parameters.

    ``kind=None`` defers to the architecture default (cosine for the
    pyramid-fusion model, polynomial for the nested U-Net). The decay
    phase spans the post-warm-up portion of training: the cosine schedule
    counts post-warm-up batches, the polynomial schedule post-warm-up
    epochs.
    """

    kind: str | None = None
    base_lr: float = 1e-3
    total_epochs: int = 200
    warmup_epochs: int = 10
    batches_per_epoch: int | None = None
    poly_power: float = 0.9

    def __post_init__(self):
        if self.kind is not None and self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"scheduler kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ConfigError(
                f"warmup_epochs must satisfy 0 <= warmup < total "
                f"({self.warmup_epochs} vs {self.total_epochs})"
            )
        if self.poly_power < 0:
            raise ConfigError(f"poly_power must be >= 0, got {self.poly_power}")


def cosine_lr(t: int | float, total_batches: int, base_lr: float) -> float:
    """Half-cosine decay from base_lr at t=0 to 0 at t=total_batches."""
    if t < 0:
        raise ConfigError(f"batch index must be >= 0, got {t}")
    if t > total_batches:
        return 0.0
    return 0.5 * (1.0 + math.cos(t * math.pi / total_batches)) * base_lr


def poly_lr(epoch: int | float, total_epochs: int, base_lr: float, power: float = 0.9) -> float:
    """Polynomial decay base_lr * (1 - e/N)^power."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    if epoch > total_epochs:
        return 0.0
    return base_lr * (1.0 - epoch / total_epochs) ** power


def warmup_lr(progress: float, base_lr: float) -> float:
    """Linear ramp: progress in [0, 1] maps to [0, base_lr]."""
    return progress * base_lr


class LrSchedule:
    """Per-step learning rate: linear warm-up spliced into the main schedule.

    Warm-up covers the first ``warmup_epochs * batches_per_epoch`` steps,
    ramping so the final warm-up step lands exactly on base_lr; the main
    schedule then starts at base_lr with no discontinuity.
    """

    def __init__(self, cfg: SchedulerConfig, batches_per_epoch: int | None = None):
        bpe = batches_per_epoch or cfg.batches_per_epoch
        if bpe is None or bpe < 1:
            raise ConfigError("batches_per_epoch must be set to build a step schedule")
        if cfg.kind is None:
            raise ConfigError("scheduler kind is unresolved")
        self.cfg = cfg
        self.batches_per_epoch = bpe
        self.warmup_steps = cfg.warmup_epochs * bpe
        self.decay_steps = (cfg.total_epochs - cfg.warmup_epochs) * bpe

    @property
    def total_steps(self) -> int:
        return self.cfg.total_epochs * self.batches_per_epoch

    def lr_for_step(self, step: int) -> float:
        """Learning rate applied at global 0-based batch index ``step``."""
        if step < self.warmup_steps:
            return warmup_lr((step + 1) / self.warmup_steps, self.cfg.base_lr)
        t = step - self.warmup_steps
        if self.cfg.kind == "cosine":
            return cosine_lr(t, self.decay_steps, self.cfg.base_lr)
        epoch = t // self.batches_per_epoch
        return poly_lr(epoch, self.cfg.total_epochs - self.cfg.warmup_epochs,
                       self.cfg.base_lr, self.cfg.poly_power)


def default_schedule_kind(architecture: str) -> str:
    return "cosine" if architecture == "bifpn" else "polynomial"
