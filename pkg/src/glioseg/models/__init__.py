"""Network construction and checkpoint I/O."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import torch
import torch.nn as nn

from ..errors import CheckpointError, ConfigError
from .bifpn import BiFPN, BiFPNNet, PyramidDecoder, fast_normalized_fusion
from .classifier import SliceClassifier
from .common import ARCHITECTURES, Encoder, NetworkConfig, count_parameters
from .unetpp import NestedUNet

CHECKPOINT_SCHEMA = 1

__all__ = [
    "ARCHITECTURES",
    "BiFPN",
    "BiFPNNet",
    "Encoder",
    "NestedUNet",
    "NetworkConfig",
    "PyramidDecoder",
    "SliceClassifier",
    "build_model",
    "count_parameters",
    "fast_normalized_fusion",
    "load_checkpoint",
    "save_checkpoint",
]


def build_model(architecture: str, cfg: NetworkConfig | None = None) -> nn.Module:
    if architecture not in ARCHITECTURES:
        raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {architecture!r}")
    if cfg is None:
        cfg = NetworkConfig.for_architecture(architecture)
    if architecture == "bifpn":
        return BiFPNNet(cfg)
    return NestedUNet(cfg)


def save_checkpoint(path: str | Path, model: nn.Module, architecture: str) -> None:
    payload = {
        "schema_version": CHECKPOINT_SCHEMA,
        "architecture": architecture,
        "network_config": dataclasses.asdict(model.cfg),
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[nn.Module, str, NetworkConfig]:
    """Rebuild a model from a checkpoint; parameters round-trip bit-exactly."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("schema_version") != CHECKPOINT_SCHEMA:
        raise CheckpointError(
            f"{path}: unsupported checkpoint schema {payload.get('schema_version')}"
        )
    raw_cfg = dict(payload["network_config"])
    for key in ("encoder_channels", "component_weights"):
        if key in raw_cfg and isinstance(raw_cfg[key], list):
            raw_cfg[key] = tuple(raw_cfg[key])
    cfg = NetworkConfig(**raw_cfg)
    architecture = payload["architecture"]
    model = build_model(architecture, cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, architecture, cfg
