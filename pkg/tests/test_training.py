import json

import numpy as np
import pytest

from glioseg.errors import ConfigError, NumericalDivergence
from glioseg.losses import LossConfig
from glioseg.models import NetworkConfig
from glioseg.preprocess import AugmentConfig
from glioseg.schedules import LrSchedule, SchedulerConfig, warmup_lr
from glioseg.training import TrainConfig, fit, fit_split, make_folds


class TestMakeFolds:
    def test_partition_of_ten(self):
        folds = make_folds([f"c{i}" for i in range(10)], k=5, seed=0)
        assert len(folds) == 5
        all_val = [v for _, val in folds for v in val]
        assert sorted(all_val) == sorted(f"c{i}" for i in range(10))
        assert all(len(val) == 2 for _, val in folds)
        for train, val in folds:
            assert not set(train) & set(val)
            assert sorted(train + val) == sorted(f"c{i}" for i in range(10))

    def test_369_cases_split_sizes(self):
        folds = make_folds([f"case{i:04d}" for i in range(369)], k=5, seed=1)
        sizes = sorted(len(val) for _, val in folds)
        assert sizes == [73, 74, 74, 74, 74]

    def test_deterministic_in_seed(self):
        ids = [f"c{i}" for i in range(12)]
        assert make_folds(ids, 3, seed=5) == make_folds(ids, 3, seed=5)
        assert make_folds(ids, 3, seed=5) != make_folds(ids, 3, seed=6)

    def test_single_fold_rejected(self):
        with pytest.raises(ConfigError):
            make_folds(["a", "b"], k=1, seed=0)

    def test_more_folds_than_cases(self):
        with pytest.raises(ConfigError):
            make_folds(["a", "b"], k=3, seed=0)


def _tiny_configs(total_epochs=1, warmup_epochs=0, bpe=1, base_lr=1e-3, seed=0):
    return (
        TrainConfig(architecture="bifpn", batch_size=1, folds=2, seed=seed),
        SchedulerConfig(
            kind="cosine",
            base_lr=base_lr,
            total_epochs=total_epochs,
            warmup_epochs=warmup_epochs,
            batches_per_epoch=bpe,
        ),
        LossConfig(),
        AugmentConfig(crop_size=(16, 16, 16), flip_prob=0.5),
        NetworkConfig(
            encoder_channels=(8, 16),
            pyramid_channels=16,
            bifpn_layers=1,
            lstm_layers=1,
            dropout_rate=0.0,
            classifier_channels=16,
        ),
    )


def _read_log(path):
    return [json.loads(line) for line in open(path)]


class TestFit:
    def test_one_epoch_one_batch_bookkeeping(self, synth_dataset, tmp_path):
        _, _, cases = synth_dataset
        train_cfg, sched, loss_cfg, aug, net = _tiny_configs(
            total_epochs=4, warmup_epochs=2, bpe=1
        )
        result = fit_split(
            cases[:2], cases[2:3], train_cfg, sched, loss_cfg, aug, net, tmp_path
        )
        steps = [r for r in _read_log(result.log_path) if r["event"] == "step"]
        assert len(steps) == 4
        schedule = LrSchedule(sched)
        assert steps[0]["lr"] == pytest.approx(warmup_lr(0.5, 1e-3))
        assert steps[1]["lr"] == pytest.approx(warmup_lr(1.0, 1e-3))
        for i, rec in enumerate(steps):
            assert rec["lr"] == pytest.approx(schedule.lr_for_step(i))
        for rec in steps:
            assert {"loss", "focal_seg", "dice", "focal_cls", "bce_cls"} <= set(rec)

    def test_deterministic_loss_sequence(self, synth_dataset, tmp_path):
        _, _, cases = synth_dataset
        cfgs = _tiny_configs(total_epochs=2, warmup_epochs=1, bpe=2, seed=9)
        r1 = fit_split(cases[:2], cases[2:3], *cfgs, tmp_path / "run1")
        r2 = fit_split(cases[:2], cases[2:3], *cfgs, tmp_path / "run2")
        losses1 = [r["loss"] for r in _read_log(r1.log_path) if r["event"] == "step"]
        losses2 = [r["loss"] for r in _read_log(r2.log_path) if r["event"] == "step"]
        assert losses1 == losses2

    def test_checkpoints_written(self, synth_dataset, tmp_path):
        _, _, cases = synth_dataset
        cfgs = _tiny_configs(total_epochs=1, warmup_epochs=0, bpe=1)
        result = fit_split(cases[:2], cases[2:3], *cfgs, tmp_path)
        assert result.best_checkpoint.exists()
        assert result.last_checkpoint.exists()
        assert result.best_val_dice >= 0.0

    def test_divergence_aborts_with_batch_id(self, synth_dataset, tmp_path):
        _, _, cases = synth_dataset
        cfgs = _tiny_configs(total_epochs=2, warmup_epochs=0, bpe=3, base_lr=1e22)
        with pytest.raises(NumericalDivergence) as err:
            fit_split(cases[:2], cases[2:3], *cfgs, tmp_path)
        assert err.value.batch_id is not None

    def test_crop_must_match_stride(self, synth_dataset, tmp_path):
        _, _, cases = synth_dataset
        train_cfg, sched, loss_cfg, _, net = _tiny_configs()
        bad_aug = AugmentConfig(crop_size=(18, 16, 16))
        with pytest.raises(ConfigError):
            fit_split(cases[:2], cases[2:3], train_cfg, sched, loss_cfg, bad_aug, net, tmp_path)

    def test_fold_orchestration(self, synth_dataset, tmp_path):
        manifest, entries, _ = synth_dataset
        train_cfg, sched, loss_cfg, aug, net = _tiny_configs(total_epochs=1, bpe=1)
        result = fit(
            entries, train_cfg, sched, loss_cfg, aug, net, tmp_path, fold_index=1
        )
        assert result.fold == 1
        assert result.log_path.name == "train_fold1.jsonl"
        with pytest.raises(ConfigError):
            fit(entries, train_cfg, sched, loss_cfg, aug, net, tmp_path, fold_index=5)

    def test_callbacks_receive_records(self, synth_dataset, tmp_path):
        _, _, cases = synth_dataset
        cfgs = _tiny_configs(total_epochs=1, bpe=2)
        seen = []
        fit_split(cases[:2], cases[2:3], *cfgs, tmp_path, callbacks=[seen.append])
        events = [r["event"] for r in seen]
        assert events.count("step") == 2
        assert "epoch" in events
        assert events[-1] == "done"


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(architecture="vgg")
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(folds=1)
    assert TrainConfig(architecture="bifpn").resolved_batch_size == 4
    assert TrainConfig(architecture="unetpp").resolved_batch_size == 2
