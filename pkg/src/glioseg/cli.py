"""Command-line entry points: train, predict, evaluate, synth.

Exit codes: 0 success, 1 runtime failure, 2 configuration error. The
compute device is taken from the GLIOSEG_DEVICE environment variable
(default "cpu"). Every command writes a frozen copy of its resolved
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import models
from .config import RunConfig, load_run_config, save_run_config
from .data import CaseEntry, load_case, load_manifest
from .errors import ConfigError, GliosegError
from .inference import InferenceConfig, predict_case
from .metrics import evaluate_dataset, write_metrics_csv, write_summary_csv
from .nifti import write_nifti
from .report import save_metric_figures, save_training_curves
from .synth import SynthConfig, write_dataset
from .training import fit, make_folds

SMOKE_CASES = 6
SMOKE_SHAPE = (32, 32, 32)


def _device() -> str:
    return os.environ.get("GLIOSEG_DEVICE", "cpu")


def _apply_smoke_preset(cfg: RunConfig, out_dir: Path) -> RunConfig:
    """Tiny synthetic run: 2 epochs on generated 32³ cases, reduced widths."""
    data_dir = out_dir / "synthetic_smoke"
    manifest = write_dataset(
        data_dir, SMOKE_CASES, cfg.seed, SynthConfig(shape=SMOKE_SHAPE)
    )
    return dataclasses.replace(
        cfg,
        manifest=str(manifest),
        train=dataclasses.replace(cfg.train, batch_size=2, folds=3),
        scheduler=dataclasses.replace(
            cfg.scheduler, total_epochs=2, warmup_epochs=1, batches_per_epoch=3
        ),
        network=models.NetworkConfig(
            in_channels=4,
            encoder_channels=(8, 16),
            pyramid_channels=16,
            bifpn_layers=1,
            norm_groups=8,
            dropout_rate=0.0,
            lstm_layers=1,
        ),
        augment=dataclasses.replace(cfg.augment, crop_size=SMOKE_SHAPE),
    )


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.synthetic == "smoke":
        cfg = _apply_smoke_preset(cfg, out_dir)
    if cfg.manifest is None:
        raise ConfigError("config field 'manifest' is required for training")
    save_run_config(cfg, out_dir / "run_config.yaml")

    entries = load_manifest(cfg.manifest)
    folds = [args.fold] if args.fold is not None else list(range(cfg.train.folds))
    for fold in folds:
        result = fit(
            entries,
            cfg.train,
            cfg.scheduler,
            cfg.loss,
            cfg.augment,
            cfg.network,
            out_dir,
            fold_index=fold,
            device=_device(),
        )
        save_training_curves(result.log_path, out_dir / f"training_curves_fold{fold}.png")
        print(
            f"fold {fold}: {result.steps} steps, best val dice "
            f"{result.best_val_dice:.4f}, checkpoints at {result.best_checkpoint} "
            f"and {result.last_checkpoint}"
        )
    return 0


def _collect_cases(input_path: Path) -> list[CaseEntry]:
    if input_path.is_file():
        return load_manifest(input_path)
    if (input_path / "manifest.json").exists():
        return load_manifest(input_path / "manifest.json")
    cases = []
    for sub in sorted(p for p in input_path.iterdir() if p.is_dir()):
        cases.append(CaseEntry(case_id=sub.name, modality_paths={}, label_path=None))
    return cases


def cmd_predict(args) -> int:
    cfg = load_run_config(args.config)
    infer_cfg: InferenceConfig = cfg.inference
    if args.no_gate:
        infer_cfg = dataclasses.replace(infer_cfg, gate_enabled=False)
    if args.no_tta:
        infer_cfg = dataclasses.replace(infer_cfg, tta_flips=((),))
    if args.avg_space:
        infer_cfg = dataclasses.replace(infer_cfg, avg_space=args.avg_space)
    if args.min_region_size is not None:
        infer_cfg = dataclasses.replace(infer_cfg, min_region_size=args.min_region_size)
    if args.write_probs:
        infer_cfg = dataclasses.replace(infer_cfg, write_probabilities=True)

    ckpt_paths = list(args.checkpoints) or list(infer_cfg.ensemble_members)
    if not ckpt_paths:
        raise ConfigError("no checkpoints given (positional args or inference.ensemble_members)")
    nets = []
    for path in ckpt_paths:
        model, _, _ = models.load_checkpoint(path)
        nets.append(model.to(_device()))

    input_path = Path(args.input)
    if not input_path.exists():
        raise ConfigError(f"input path not found: {input_path}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_run_config(dataclasses.replace(cfg, inference=infer_cfg), out_dir / "run_config.yaml")

    entries = _collect_cases(input_path)
    if not entries:
        print("0 cases found; nothing to predict")
        return 0

    manifest: dict[str, dict] = {}
    for entry in entries:
        if entry.modality_paths:
            volume, _ = entry.load()
        else:
            volume, _ = load_case(input_path / entry.case_id)
        result = predict_case(volume, nets, infer_cfg)
        label_path = out_dir / f"{entry.case_id}.nii.gz"
        write_nifti(label_path, result.labels.labels, result.affine)
        record = {
            "labels": label_path.name,
            "slice_keep": {
                region: [bool(v) for v in result.slice_keep[i]]
                for i, region in enumerate(("wt", "tc", "et"))
            },
            "slice_probs": {
                region: [round(float(v), 4) for v in result.slice_probs[i]]
                for i, region in enumerate(("wt", "tc", "et"))
            },
        }
        if infer_cfg.write_probabilities:
            prob_path = out_dir / f"{entry.case_id}_probs.nii.gz"
            write_nifti(prob_path, np.moveaxis(result.probabilities, 0, -1), result.affine)
            record["probabilities"] = prob_path.name
        manifest[entry.case_id] = record
        print(f"predicted {entry.case_id} -> {label_path.name}")

    with open(out_dir / "prediction_manifest.json", "w") as fh:
        json.dump({"cases": manifest}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_evaluate(args) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    if not gt_dir.is_dir():
        raise ConfigError(f"ground-truth directory not found: {gt_dir}")
    if not pred_dir.is_dir():
        raise ConfigError(f"prediction directory not found: {pred_dir}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = evaluate_dataset(pred_dir, gt_dir)
    write_metrics_csv(result, out_dir / "metrics.csv")
    write_summary_csv(result, out_dir / "summary.csv", method=args.method)
    if result.cases:
        save_metric_figures(result, out_dir)
    with open(out_dir / "evaluate_config.yaml", "w") as fh:
        yaml.safe_dump({"pred": str(pred_dir), "gt": str(gt_dir), "method": args.method}, fh)

    print(f"evaluated {len(result.cases)} cases; tables and figures in {out_dir}")
    for region in ("et", "wt", "tc"):
        print(
            f"  {region.upper()}: dice {result.mean('dice', region):.4f} "
            f"hd95 {result.mean('hd95', region):.4f}"
        )
    if result.skipped:
        print(f"skipped {len(result.skipped)} case(s) without predictions: {result.skipped}")
        return 1
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        shape=tuple(args.shape),
        tumor_fraction=tuple(args.fraction),
    )
    manifest = write_dataset(args.out, args.cases, args.seed, cfg, with_labels=not args.no_labels)
    with open(Path(args.out) / "synth_config.yaml", "w") as fh:
        yaml.safe_dump(
            {"cases": args.cases, "seed": args.seed, **dataclasses.asdict(cfg)}, fh
        )
    print(f"wrote {args.cases} synthetic case(s); manifest at {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glioseg",
        description="Dual-branch 3D brain tumor segmentation with slice-classification gating",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one fold or all folds")
    p.add_argument("--config", required=True, help="run configuration YAML")
    p.add_argument("--fold", type=int, default=None, help="fold index; default: all folds")
    p.add_argument("--synthetic", choices=["smoke"], default=None,
                   help="replace the dataset with a generated smoke-test corpus")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run inference over a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True, help="manifest file or case directory root")
    p.add_argument("--out", required=True)
    p.add_argument("checkpoints", nargs="*", help="checkpoint files forming the ensemble")
    p.add_argument("--no-gate", action="store_true", help="disable slice-classification gating")
    p.add_argument("--no-tta", action="store_true", help="single plain forward, no flips")
    p.add_argument("--avg-space", choices=["logits", "probs"], default=None)
    p.add_argument("--min-region-size", type=int, default=None,
                   help="optional connected-component volume filter (baseline)")
    p.add_argument("--write-probs", action="store_true",
                   help="also write per-region probability volumes")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default="evaluation")
    p.add_argument("--method", default="glioseg")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--cases", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=int, nargs=3, default=list(SynthConfig().shape))
    p.add_argument("--fraction", type=float, nargs=2, default=list(SynthConfig().tumor_fraction))
    p.add_argument("--no-labels", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except GliosegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
