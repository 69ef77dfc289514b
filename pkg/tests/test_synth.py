import numpy as np
import pytest

from glioseg.data import labels_to_regions, load_manifest
from glioseg.synth import SynthConfig, generate_case, write_dataset


def test_deterministic_generation():
    a = generate_case(np.random.default_rng(7))
    b = generate_case(np.random.default_rng(7))
    np.testing.assert_array_equal(a[0].modalities, b[0].modalities)
    np.testing.assert_array_equal(a[1].labels, b[1].labels)


def test_dataset_byte_identical(tmp_path):
    m1 = write_dataset(tmp_path / "d1", 4, seed=7, cfg=SynthConfig(shape=(24, 24, 24)))
    m2 = write_dataset(tmp_path / "d2", 4, seed=7, cfg=SynthConfig(shape=(24, 24, 24)))
    files1 = sorted(p for p in (tmp_path / "d1").rglob("*") if p.is_file())
    files2 = sorted(p for p in (tmp_path / "d2").rglob("*") if p.is_file())
    assert [p.name for p in files1] == [p.name for p in files2]
    for f1, f2 in zip(files1, files2):
        assert f1.read_bytes() == f2.read_bytes(), f1.name


def test_labels_are_nested(rng):
    for _ in range(5):
        _, labels = generate_case(rng)
        regions = labels_to_regions(labels)
        assert np.all(regions.et <= regions.tc)
        assert np.all(regions.tc <= regions.wt)
        assert regions.et.sum() > 0


def test_tumor_fraction_in_band(rng):
    cfg = SynthConfig(shape=(64, 64, 64), tumor_fraction=(0.015, 0.08))
    for _ in range(5):
        _, labels = generate_case(rng, cfg)
        wt_fraction = (labels.labels > 0).mean()
        assert 0.01 <= wt_fraction <= 0.10


def test_modality_contrast(rng):
    volume, labels = generate_case(rng)
    wt = labels.labels > 0
    et = labels.labels == 4
    brain_bg = (volume.flair > 0) & ~wt
    # whole tumor brightest in FLAIR, enhancing tumor in T1Gd
    assert volume.flair[wt].mean() > volume.flair[brain_bg].mean() + 0.5
    assert volume.t1gd[et].mean() > volume.t1gd[brain_bg].mean() + 0.5


def test_background_is_zero(rng):
    volume, _ = generate_case(rng)
    corner = volume.modalities[:, :2, :2, :2]
    assert np.all(corner == 0)


def test_manifest_loads(tmp_path):
    manifest = write_dataset(tmp_path, 2, seed=1, cfg=SynthConfig(shape=(24, 24, 24)))
    entries = load_manifest(manifest)
    assert len(entries) == 2
    volume, labels = entries[0].load()
    assert labels is not None
    assert volume.shape == (24, 24, 24)
