"""Run configuration: one YAML file validated as a whole, with
architecture-aware defaults and a frozen copy written next to every run's
outputs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .inference import InferenceConfig
from .losses import LossConfig
from .models import NetworkConfig
from .preprocess import AugmentConfig
from .schedules import SchedulerConfig, default_schedule_kind
from .training import ARCH_PATCH_SIZES, TrainConfig


@dataclass
class RunConfig:
    output_dir: str = "runs/default"
    manifest: str | None = None
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)


def _to_tuple(value):
    if isinstance(value, list):
        return tuple(_to_tuple(v) for v in value)
    return value


def _build(cls, data: dict | None, context: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section '{context}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{context}': {unknown}")
    return cls(**{k: _to_tuple(v) for k, v in data.items()})


_SECTIONS = ("train", "scheduler", "loss", "augment", "network", "inference")


def run_config_from_dict(raw: dict) -> RunConfig:
    """Build and validate a RunConfig; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("run configuration must be a mapping")
    known = set(_SECTIONS) | {"output_dir", "manifest", "seed"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {unknown}")

    train = _build(TrainConfig, raw.get("train"), "train")
    if "seed" not in (raw.get("train") or {}):
        train = dataclasses.replace(train, seed=int(raw.get("seed", 0)))
    arch = train.architecture

    net_data = dict(raw.get("network") or {})
    defaults = NetworkConfig.for_architecture(arch)
    net_merged = {**dataclasses.asdict(defaults), **net_data}
    network = _build(NetworkConfig, net_merged, "network")

    sched = _build(SchedulerConfig, raw.get("scheduler"), "scheduler")
    if sched.kind is None:
        sched = dataclasses.replace(sched, kind=default_schedule_kind(arch))

    aug_data = dict(raw.get("augment") or {})
    if "crop_size" not in aug_data:
        aug_data["crop_size"] = ARCH_PATCH_SIZES[arch]
    augment = _build(AugmentConfig, aug_data, "augment")

    return RunConfig(
        output_dir=str(raw.get("output_dir", "runs/default")),
        manifest=raw.get("manifest"),
        seed=int(raw.get("seed", 0)),
        train=train,
        scheduler=sched,
        loss=_build(LossConfig, raw.get("loss"), "loss"),
        augment=augment,
        network=network,
        inference=_build(InferenceConfig, raw.get("inference"), "inference"),
    )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return run_config_from_dict(raw)


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the fully resolved configuration for reproducibility."""
    raw = {
        "output_dir": cfg.output_dir,
        "manifest": cfg.manifest,
        "seed": cfg.seed,
    }
    for section in _SECTIONS:
        raw[section] = dataclasses.asdict(getattr(cfg, section))
    with open(path, "w") as fh:
        yaml.safe_dump(raw, fh, sort_keys=False)
