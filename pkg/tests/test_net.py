import numpy as np
import pytest

from scanid.net import (DEFAULT_DESCRIPTOR, PatchNet, build_network,
                        inception_forward, load_checkpoint,
                        resnet34_param_count, save_checkpoint, softmax)
from scanid.net.layers import BatchNorm2D, Conv2D, ReLU, Sequential
from scanid.net.model import InceptionResidual, stage_out_channels


def scalar_conv2d(x, w, pad):
    """Straight-line reference convolution (same semantics as Conv2D)."""
    n, c, h, ww = x.shape
    f, _, kh, kw = w.shape
    oh, ow = h + 2 * pad - kh + 1, ww + 2 * pad - kw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, f, oh, ow))
    for bi in range(n):
        for fi in range(f):
            for oi in range(oh):
                for oj in range(ow):
                    out[bi, fi, oi, oj] = (
                        xp[bi, :, oi:oi + kh, oj:oj + kw] * w[fi]).sum()
    return out


class TestSoftmax:
    def test_known_values(self):
        np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])
        np.testing.assert_allclose(softmax([np.log(2), 0.0]),
                                   [2 / 3, 1 / 3], atol=1e-12)

    def test_shift_invariance(self):
        z = np.random.default_rng(0).normal(size=10)
        np.testing.assert_allclose(softmax(z), softmax(z + 123.4), atol=1e-9)

    def test_argmax_invariance_under_scaling(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            z = rng.normal(size=8)
            assert softmax(z).argmax() == softmax(3.7 * z).argmax()


class TestBuildNetwork:
    def test_output_width_matches_classes(self):
        net = build_network(10, seed=0)
        x = np.random.default_rng(0).random((2, 3, 64, 64), dtype=np.float32)
        assert net.forward(x).shape == (2, 10)

    def test_seed_determinism(self):
        a = build_network(4, seed=5)
        b = build_network(4, seed=5)
        for (na, pa), (nb, pb) in zip(a.named_params(), b.named_params()):
            assert na == nb
            np.testing.assert_array_equal(pa.value, pb.value)

    def test_fewer_params_than_resnet34(self):
        net = build_network(169, seed=0)
        assert net.param_count() < resnet34_param_count(169)

    def test_rejects_single_class(self):
        with pytest.raises(ValueError):
            PatchNet(1)


class TestForward:
    def test_prob_normalization(self):
        net = build_network(7, seed=2)
        x = np.random.default_rng(3).random((5, 3, 64, 64), dtype=np.float32)
        p = net.forward(x)
        assert (p >= 0).all() and (p <= 1).all()
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_zeroed_ip_gives_uniform(self):
        net = build_network(6, seed=0)
        ip = dict(net.named_params())
        ip["ip.w"].value[...] = 0
        ip["ip.b"].value[...] = 0
        x = np.random.default_rng(1).random((3, 3, 64, 64), dtype=np.float32)
        np.testing.assert_allclose(net.forward(x), 1 / 6, atol=1e-9)

    def test_eval_batching_invariance(self):
        net = build_network(5, seed=4)
        x = np.random.default_rng(2).random((8, 3, 64, 64), dtype=np.float32)
        batched = net.forward(x)
        singles = np.concatenate([net.forward(x[i:i + 1]) for i in range(8)])
        np.testing.assert_allclose(batched, singles, atol=1e-6)

    def test_wrong_shape_raises(self):
        net = build_network(3, seed=0)
        with pytest.raises(ValueError):
            net.forward(np.zeros((1, 3, 32, 32), dtype=np.float32))


class TestInceptionModule:
    def test_output_channel_arithmetic(self):
        cfg = DEFAULT_DESCRIPTOR["stages"][0]
        mod = InceptionResidual(32, cfg)
        rng = np.random.default_rng(0)
        mod.init_weights(rng, np.float32)
        x = rng.random((2, 32, 16, 16), dtype=np.float32)
        out = inception_forward(mod, x)
        assert out.shape == (2, stage_out_channels(cfg), 16, 16)

    def test_zero_input_gives_bn_shift_only(self):
        cfg = DEFAULT_DESCRIPTOR["stages"][0]
        mod = InceptionResidual(32, cfg)
        mod.init_weights(np.random.default_rng(0), np.float32)
        x = np.zeros((1, 32, 8, 8), dtype=np.float32)
        out = inception_forward(mod, x)
        # with beta = 0 the eval-mode BN of a zero pre-activation is zero
        np.testing.assert_allclose(out, 0, atol=1e-6)

    def test_residual_identity_when_branches_zeroed(self):
        cfg = DEFAULT_DESCRIPTOR["stages"][0]
        mod = InceptionResidual(32, cfg)
        mod.init_weights(np.random.default_rng(3), np.float32)
        for name, p in mod.named_params():
            if not name.startswith("shortcut.") and name.endswith(".w"):
                p.value[...] = 0
        x = np.random.default_rng(4).random((2, 32, 8, 8), dtype=np.float32)
        np.testing.assert_allclose(mod.forward(x), mod.shortcut.forward(x),
                                   atol=1e-6)

    def test_branches_match_scalar_reference(self):
        # each conv inside the module agrees with the straight-line oracle
        rng = np.random.default_rng(7)
        conv = Conv2D(4, 6, 3, 1)
        conv.init_weights(rng, np.float64)
        x = rng.random((2, 4, 9, 9))
        ref = scalar_conv2d(x, conv.w.value, 1)
        assert np.abs(conv.forward(x) - ref).max() < 1e-5

    def test_5x5_conv_matches_scalar_reference(self):
        rng = np.random.default_rng(8)
        conv = Conv2D(3, 2, 5, 2)
        conv.init_weights(rng, np.float64)
        x = rng.random((1, 3, 8, 10))
        ref = scalar_conv2d(x, conv.w.value, 2)
        assert np.abs(conv.forward(x) - ref).max() < 1e-5


class TestCheckpoint:
    def test_roundtrip_preserves_eval_outputs(self, tmp_path):
        net = build_network(4, seed=9)
        # give BN stats non-trivial values via a train-mode pass
        x = np.random.default_rng(5).random((6, 3, 64, 64), dtype=np.float32)
        net.forward(x, train=True)
        before = net.forward(x)
        path = tmp_path / "w.scid"
        save_checkpoint(net, path, ["a", "b", "c", "d"], {"epochs": 0})
        net2, labels, cfg = load_checkpoint(path)
        assert labels == ["a", "b", "c", "d"] and cfg == {"epochs": 0}
        np.testing.assert_allclose(net2.forward(x), before, atol=1e-6)

    def test_label_registry_size_checked(self, tmp_path):
        net = build_network(4, seed=0)
        with pytest.raises(ValueError):
            save_checkpoint(net, tmp_path / "w.scid", ["only", "two"])

    def test_rejects_non_checkpoint(self, tmp_path):
        p = tmp_path / "bogus.scid"
        p.write_bytes(b"XXXXnothing")
        with pytest.raises(ValueError):
            load_checkpoint(p)
