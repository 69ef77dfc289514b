import numpy as np
import pytest
import torch
import torch.nn as nn

from glioseg.errors import ConfigError, ShapeError
from glioseg.models import (
    NetworkConfig,
    build_model,
    count_parameters,
    fast_normalized_fusion,
    load_checkpoint,
    save_checkpoint,
)
from glioseg.models.bifpn import BiFPNNet
from glioseg.models.classifier import SliceClassifier
from glioseg.models.common import Encoder
from glioseg.models.unetpp import NestedUNet


class TestNetworkConfig:
    def test_defaults_per_architecture(self):
        b = NetworkConfig.for_architecture("bifpn")
        assert b.encoder_channels == (16, 32, 64, 128)
        assert b.lstm_layers == 2
        u = NetworkConfig.for_architecture("unetpp")
        assert u.encoder_channels == (32, 64, 128, 256)
        assert u.lstm_layers == 3

    def test_doubling_enforced(self):
        with pytest.raises(ConfigError):
            NetworkConfig(encoder_channels=(16, 48))

    def test_groups_must_divide(self):
        with pytest.raises(ConfigError):
            NetworkConfig(encoder_channels=(12, 24), norm_groups=8)

    def test_num_regions_fixed(self):
        with pytest.raises(ConfigError):
            NetworkConfig(num_regions=4)


class TestEncoder:
    def test_stride_arithmetic_small(self):
        enc = Encoder(NetworkConfig())
        levels = enc(torch.randn(1, 4, 16, 16, 16))
        shapes = [tuple(l.shape[1:]) for l in levels]
        assert shapes == [
            (16, 8, 8, 8),
            (32, 4, 4, 4),
            (64, 2, 2, 2),
            (128, 1, 1, 1),
        ]

    def test_rejects_bad_extent(self):
        enc = Encoder(NetworkConfig())
        with pytest.raises(ShapeError):
            enc(torch.randn(1, 4, 15, 16, 16))

    def test_halving_with_mixed_extents(self, small_net_cfg):
        enc = Encoder(small_net_cfg)
        levels = enc(torch.randn(1, 4, 32, 32, 16))
        assert [tuple(l.shape[2:]) for l in levels] == [
            (16, 16, 8),
            (8, 8, 4),
            (4, 4, 2),
            (2, 2, 1),
        ]


class TestFusion:
    def test_single_input_passthrough(self):
        x = torch.randn(1, 8, 4, 4, 4)
        out = fast_normalized_fusion([x], torch.tensor([2.0]))
        torch.testing.assert_close(out, x * (2.0 / (2.0 + 1e-4)))
        torch.testing.assert_close(out, x, rtol=1e-4, atol=1e-6)

    def test_weighted_mean(self):
        a = torch.ones(2, 2)
        b = torch.zeros(2, 2)
        out = fast_normalized_fusion([a, b], torch.tensor([3.0, 1.0]))
        torch.testing.assert_close(out, torch.full((2, 2), 3.0 / (4.0 + 1e-4)))

    def test_negative_weights_clipped(self):
        a = torch.ones(2)
        b = torch.full((2,), 100.0)
        out = fast_normalized_fusion([a, b], torch.tensor([1.0, -5.0]))
        torch.testing.assert_close(out, torch.ones(2) / (1.0 + 1e-4))

    def test_weight_count_mismatch(self):
        with pytest.raises(ShapeError):
            fast_normalized_fusion([torch.ones(2)], torch.ones(2))


class TestBiFPNNet:
    def test_shapes_small(self, small_net_cfg):
        net = build_model("bifpn", small_net_cfg).eval()
        x = torch.randn(1, 4, 32, 32, 16)
        with torch.no_grad():
            seg, slc = net(x)
        assert seg.shape == (1, 3, 32, 32, 16)
        assert slc.shape == (1, 3, 16)

    def test_two_level_variant(self, tiny_net_cfg):
        net = build_model("bifpn", tiny_net_cfg).eval()
        with torch.no_grad():
            seg, slc = net(torch.randn(1, 4, 16, 16, 16))
        assert seg.shape == (1, 3, 16, 16, 16)
        assert slc.shape == (1, 3, 16)

    def test_zero_input_finite(self, small_net_cfg):
        net = build_model("bifpn", small_net_cfg).eval()
        with torch.no_grad():
            seg, slc = net(torch.zeros(1, 4, 16, 16, 16))
        assert torch.isfinite(seg).all()
        assert torch.isfinite(slc).all()

    def test_eval_mode_deterministic(self, small_net_cfg):
        net = build_model("bifpn", small_net_cfg).eval()
        x = torch.randn(1, 4, 16, 16, 16)
        with torch.no_grad():
            a, _ = net(x)
            b, _ = net(x)
        torch.testing.assert_close(a, b, rtol=0, atol=0)

    def test_decoder_single_level_ablation(self, small_net_cfg):
        net = build_model("bifpn", small_net_cfg).eval()
        x = torch.randn(1, 4, 16, 16, 16)
        with torch.no_grad():
            levels = net.bifpn(net.encoder(x))
            for i in range(len(levels) - 1):
                levels[i] = torch.zeros_like(levels[i])
            fused = net.decoder(levels)
        assert fused.shape[1] == net.decoder.fused_channels
        assert torch.isfinite(fused).all()


class TestNestedUNet:
    def test_shapes_small(self):
        cfg = NetworkConfig.for_architecture(
            "unetpp", encoder_channels=(8, 16, 32, 64), lstm_layers=1,
            classifier_channels=16, dropout_rate=0.0,
        )
        net = build_model("unetpp", cfg).eval()
        x = torch.randn(1, 4, 32, 32, 16)
        with torch.no_grad():
            seg, slc = net(x)
        assert seg.shape == (1, 3, 32, 32, 16)
        assert slc.shape == (1, 3, 16)

    def test_top_row_width(self):
        cfg = NetworkConfig.for_architecture(
            "unetpp", encoder_channels=(8, 16, 32, 64), lstm_layers=1,
            classifier_channels=16, dropout_rate=0.0,
        )
        net = NestedUNet(cfg).eval()
        with torch.no_grad():
            _, top = net.forward_features(torch.randn(1, 4, 16, 16, 16))
        assert top.shape == (1, 4 * 8, 16, 16, 16)

    def test_deep_supervision_averages_heads(self):
        cfg = NetworkConfig.for_architecture(
            "unetpp", encoder_channels=(8, 16), lstm_layers=1,
            classifier_channels=8, dropout_rate=0.0,
        )
        net = NestedUNet(cfg).eval()

        class ConstHead(nn.Module):
            def __init__(self, value):
                super().__init__()
                self.value = value

            def forward(self, x, out_size):
                return torch.full((x.shape[0], 3, *out_size), self.value)

        net.heads = nn.ModuleDict({j: ConstHead(0.7) for j in net.heads})
        with torch.no_grad():
            seg, _ = net.forward_features(torch.randn(1, 4, 8, 8, 8))
        torch.testing.assert_close(seg, torch.full_like(seg, 0.7))

    def test_deep_supervision_flag_changes_head_count(self):
        base = dict(encoder_channels=(8, 16, 32), lstm_layers=1,
                    classifier_channels=8, dropout_rate=0.0)
        on = NestedUNet(NetworkConfig(deep_supervision=True, **base))
        off = NestedUNet(NetworkConfig(deep_supervision=False, **base))
        assert len(on.heads) == 2
        assert len(off.heads) == 1

    def test_rejects_bad_extent(self):
        cfg = NetworkConfig(encoder_channels=(8, 16), lstm_layers=1, dropout_rate=0.0)
        net = NestedUNet(cfg)
        with pytest.raises(ShapeError):
            net(torch.randn(1, 4, 10, 8, 8))


class TestSliceClassifier:
    def test_constant_axial_input_gives_constant_sequence(self):
        cls = SliceClassifier(8, 8, lstm_layers=1, dropout=0.0, norm_groups=8)
        cls.eval()
        features = torch.randn(1, 8, 4, 4, 1).repeat(1, 1, 1, 1, 6)
        with torch.no_grad():
            pooled = cls.pool(features)
        # pooling an axially-constant input yields identical slice features
        torch.testing.assert_close(pooled, pooled[..., :1].repeat(1, 1, 6))
        # and interior slices stay identical after the axially-coupled conv
        with torch.no_grad():
            conv_pooled = cls.pool(cls.act(cls.norm(cls.conv(features))))
        torch.testing.assert_close(conv_pooled[..., 1:5], conv_pooled[..., 1:2].repeat(1, 1, 4))

    def test_axial_restoration(self):
        cls = SliceClassifier(8, 8, lstm_layers=1, dropout=0.0, upsample_axial=True)
        cls.eval()
        with torch.no_grad():
            out = cls(torch.randn(1, 8, 4, 4, 6))
        assert out.shape == (1, 3, 12)

    def test_axial_too_small(self):
        cls = SliceClassifier(8, 8, lstm_layers=1, dropout=0.0)
        with pytest.raises(ShapeError):
            cls(torch.randn(1, 8, 4, 4, 1))


class TestCountParameters:
    def test_conv_example(self):
        conv = nn.Conv3d(4, 16, 3)
        assert count_parameters(conv) == 4 * 16 * 27 + 16

    def test_empty_model(self):
        assert count_parameters(nn.Sequential()) == 0

    def test_wider_pyramid_has_more_parameters(self):
        small = NetworkConfig(encoder_channels=(8, 16), pyramid_channels=16,
                              bifpn_layers=1, lstm_layers=1, dropout_rate=0.0)
        large = NetworkConfig(encoder_channels=(8, 16), pyramid_channels=32,
                              bifpn_layers=1, lstm_layers=1, dropout_rate=0.0)
        assert count_parameters(BiFPNNet(large)) > count_parameters(BiFPNNet(small))


class TestCheckpoints:
    def test_bit_exact_roundtrip(self, tmp_path, tiny_net_cfg):
        net = build_model("bifpn", tiny_net_cfg)
        path = tmp_path / "model.pt"
        save_checkpoint(path, net, "bifpn")
        loaded, arch, cfg = load_checkpoint(path)
        assert arch == "bifpn"
        assert cfg == tiny_net_cfg
        for (ka, a), (kb, b) in zip(
            net.state_dict().items(), loaded.state_dict().items()
        ):
            assert ka == kb
            assert torch.equal(a, b)

    def test_loaded_model_reproduces_outputs(self, tmp_path, tiny_net_cfg):
        net = build_model("bifpn", tiny_net_cfg).eval()
        x = torch.randn(1, 4, 16, 16, 16)
        with torch.no_grad():
            seg, slc = net(x)
        path = tmp_path / "model.pt"
        save_checkpoint(path, net, "bifpn")
        loaded, _, _ = load_checkpoint(path)
        with torch.no_grad():
            seg2, slc2 = loaded(x)
        torch.testing.assert_close(seg, seg2, rtol=0, atol=0)
        torch.testing.assert_close(slc, slc2, rtol=0, atol=0)

    def test_unreadable_checkpoint(self, tmp_path):
        path = tmp_path / "junk.pt"
        path.write_bytes(b"not a checkpoint")
        from glioseg.errors import CheckpointError

        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_unknown_architecture():
    with pytest.raises(ConfigError):
        build_model("resnet")
