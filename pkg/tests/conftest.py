import numpy as np
import pytest
import torch

from glioseg.data import load_manifest
from glioseg.models import NetworkConfig
from glioseg.synth import SynthConfig, generate_case, write_dataset
from glioseg.training import prepare_case


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def synth_case(rng):
    return generate_case(rng, SynthConfig(shape=(48, 48, 48)))


@pytest.fixture
def tiny_net_cfg():
    """Two-level reduced-width pyramid network config."""
    return NetworkConfig(
        encoder_channels=(8, 16),
        pyramid_channels=16,
        bifpn_layers=1,
        norm_groups=8,
        dropout_rate=0.0,
        lstm_layers=1,
        classifier_channels=16,
    )


@pytest.fixture
def small_net_cfg():
    """Four-level reduced-width config (stride 16, as in the full model)."""
    return NetworkConfig(
        encoder_channels=(8, 16, 32, 64),
        pyramid_channels=32,
        bifpn_layers=1,
        norm_groups=8,
        dropout_rate=0.0,
        lstm_layers=1,
        classifier_channels=32,
    )


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Four prepared 48³ training cases reused across tests."""
    root = tmp_path_factory.mktemp("synthds")
    manifest = write_dataset(root, 4, seed=11, cfg=SynthConfig(shape=(48, 48, 48)))
    entries = load_manifest(manifest)
    return manifest, entries, [prepare_case(e) for e in entries]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance" in rep.nodeid and rep.when == "call":
                name = rep.nodeid.split("::")[-1]
                rows.append((name, "PASS" if status == "passed" else "FAIL"))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, verdict in sorted(rows):
            terminalreporter.write_line(f"{name}: {verdict}")
