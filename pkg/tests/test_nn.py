"""Unit tests for the numpy NN kernel.

Gradient correctness is established against central finite differences;
layer forward passes are checked against closed-form values or brute-force
re-implementations computed inside the test (never copied from the code
under test).
"""

import math

import numpy as np
import pytest

from draftrank import nn


def seq(*layers, dtype=np.float64):
    return nn.Sequential(list(layers), dtype=dtype)


class TestActivations:
    def test_tanh_zero(self):
        net = seq(nn.Tanh())
        assert net.forward(np.zeros((1, 3)))[0, 0] == 0.0

    def test_tanh_derivative_at_zero(self):
        layer = nn.Tanh()
        layer.forward(np.zeros((1, 1)))
        assert layer.backward(np.ones((1, 1)))[0, 0] == 1.0

    def test_elu_negative_value(self):
        # alpha * (e^x - 1) at x = -1
        layer = nn.Elu(alpha=1.0)
        out = layer.forward(np.array([[-1.0]]))
        assert out[0, 0] == pytest.approx(math.exp(-1) - 1, abs=1e-12)

    def test_elu_derivative_negative(self):
        # d/dx alpha*(e^x - 1) = alpha * e^x at x = -1
        layer = nn.Elu(alpha=1.0)
        layer.forward(np.array([[-1.0]]))
        grad = layer.backward(np.ones((1, 1)))
        assert grad[0, 0] == pytest.approx(math.exp(-1), abs=1e-12)

    def test_elu_positive_identity(self):
        layer = nn.Elu()
        x = np.array([[0.5, 2.0]])
        assert np.array_equal(layer.forward(x), x)


class TestDense:
    def test_identity_weights(self):
        rng = np.random.default_rng(0)
        layer = nn.Dense(2, 2, rng)
        layer.params["w"][...] = np.eye(2)
        layer.params["b"][...] = 0
        x = np.array([[3.0, 4.0]])
        assert np.allclose(layer.forward(x), x)

    def test_shape_mismatch(self):
        layer = nn.Dense(3, 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            layer.forward(np.zeros((1, 4)))


class TestLayerNorm:
    def test_mean_zero_var_one(self):
        rng = np.random.default_rng(3)
        x = rng.normal(2.0, 3.0, size=(16, 64))
        layer = nn.LayerNorm(64)
        layer.dtype = np.float64
        y = layer.forward(x)
        assert np.all(np.abs(y.mean(axis=1)) < 1e-6)
        assert np.all(np.abs(y.var(axis=1) - 1.0) < 1e-6)

    def test_conv_map_normalization(self):
        rng = np.random.default_rng(4)
        x = rng.normal(-1.0, 0.5, size=(4, 2, 5, 7))
        layer = nn.LayerNorm((2, 5, 7))
        layer.dtype = np.float64
        y = layer.forward(x)
        flat = y.reshape(4, -1)
        assert np.all(np.abs(flat.mean(axis=1)) < 1e-6)
        assert np.all(np.abs(flat.var(axis=1) - 1.0) < 1e-6)


class TestDropout:
    def test_eval_is_identity(self):
        layer = nn.Dropout(0.5, np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(8, 8))
        assert np.array_equal(layer.forward(x, train=False), x)

    def test_train_scaling_preserves_mean(self):
        rng = np.random.default_rng(2)
        layer = nn.Dropout(0.3, rng)
        x = np.ones((200, 200))
        y = layer.forward(x, train=True)
        kept = y[y > 0]
        assert np.allclose(kept, 1.0 / 0.7)
        assert abs(y.mean() - 1.0) < 0.02


class TestConv2d:
    def test_matches_naive_convolution(self):
        rng = np.random.default_rng(5)
        layer = nn.Conv2d(2, 3, kernel=3, rng=rng, stride=1, pad=1)
        layer.dtype = np.float64
        x = rng.normal(size=(2, 2, 5, 6))
        y = layer.forward(x)

        w = layer.params["w"].astype(np.float64)
        b = layer.params["b"].astype(np.float64)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros_like(y)
        for n in range(2):
            for co in range(3):
                for i in range(5):
                    for j in range(6):
                        patch = xp[n, :, i:i + 3, j:j + 3]
                        expected[n, co, i, j] = (patch * w[co]).sum() + b[co]
        np.testing.assert_allclose(y, expected, atol=1e-12)

    def test_stride_two_shape(self):
        layer = nn.Conv2d(1, 4, kernel=3, rng=np.random.default_rng(0), stride=2, pad=1)
        y = layer.forward(np.zeros((1, 1, 9, 7), dtype=np.float32))
        assert y.shape == (1, 4, 5, 4)


class TestMaxPool:
    def test_values_and_crop(self):
        layer = nn.MaxPool2d(2)
        x = np.arange(30, dtype=np.float64).reshape(1, 1, 5, 6)
        y = layer.forward(x)
        assert y.shape == (1, 1, 2, 3)
        # window maxima are the bottom-right corners for an increasing ramp
        np.testing.assert_array_equal(y[0, 0], [[7, 9, 11], [19, 21, 23]])

    def test_backward_routes_to_argmax(self):
        layer = nn.MaxPool2d(2)
        x = np.array([[[[1.0, 2.0], [4.0, 3.0]]]])
        layer.forward(x)
        dx = layer.backward(np.array([[[[5.0]]]]))
        np.testing.assert_array_equal(dx[0, 0], [[0, 0], [5, 0]])


class TestUpsample:
    def test_round_trip_with_sum(self):
        layer = nn.Upsample2d(2)
        x = np.random.default_rng(0).normal(size=(1, 2, 3, 3))
        y = layer.forward(x)
        assert y.shape == (1, 2, 6, 6)
        dx = layer.backward(np.ones_like(y))
        np.testing.assert_allclose(dx, 4.0)


class TestTripletLoss:
    def test_degenerate_equal_points(self):
        a = np.zeros((1, 2))
        loss, per, _ = nn.triplet_loss(a, a.copy(), a.copy(), margin=1.0)
        assert loss == pytest.approx(1.0, abs=1e-9)

    def test_inactive_hinge_zero_gradients(self):
        # d(a,p)=1, d(a,n)=2.5 -> max(1 - 2.5 + 1, 0) = 0
        a = np.array([[0.0, 0.0]])
        p = np.array([[1.0, 0.0]])
        n = np.array([[0.0, 2.5]])
        loss, per, (da, dp, dn) = nn.triplet_loss(a, p, n, margin=1.0)
        assert loss == 0.0
        assert np.all(da == 0) and np.all(dp == 0) and np.all(dn == 0)

    def test_active_hinge_value(self):
        # d(a,p)=3, d(a,n)=1 -> 3 - 1 + 1 = 3
        a = np.array([[0.0, 0.0]])
        p = np.array([[3.0, 0.0]])
        n = np.array([[1.0, 0.0]])
        loss, _, _ = nn.triplet_loss(a, p, n, margin=1.0)
        assert loss == pytest.approx(3.0, abs=1e-6)

    def test_nonnegative_and_satisfied_zero(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, p, n = rng.normal(size=(3, 4, 8))
            loss, per, _ = nn.triplet_loss(a, p, n, margin=1.0)
            assert loss >= 0.0
            d_ap = np.sqrt(((a - p) ** 2).sum(-1))
            d_an = np.sqrt(((a - n) ** 2).sum(-1))
            satisfied = d_an >= d_ap + 1.0
            assert np.all(per[satisfied] <= 1e-9)

    def test_margin_zero_hinge_definition(self):
        # with margin 0 the loss vanishes exactly when d(a,p) <= d(a,n)
        rng = np.random.default_rng(8)
        for _ in range(50):
            a, p, n = rng.normal(size=(3, 6, 5))
            _, per, _ = nn.triplet_loss(a, p, n, margin=0.0)
            d_ap = np.sqrt(((a - p) ** 2).sum(-1))
            d_an = np.sqrt(((a - n) ** 2).sum(-1))
            np.testing.assert_array_equal(per == 0.0, d_ap <= d_an)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        a, p, n = rng.normal(size=(3, 5, 6))
        loss, _, (da, dp, dn) = nn.triplet_loss(a, p, n, margin=1.0)
        h = 1e-6
        for arr, grad in ((a, da), (p, dp), (n, dn)):
            for idx in range(arr.size):
                orig = arr.flat[idx]
                arr.flat[idx] = orig + h
                f1 = nn.triplet_loss(a, p, n, margin=1.0)[0]
                arr.flat[idx] = orig - h
                f2 = nn.triplet_loss(a, p, n, margin=1.0)[0]
                arr.flat[idx] = orig
                fd = (f1 - f2) / (2 * h)
                assert abs(fd - grad.flat[idx]) < 1e-5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.triplet_loss(np.zeros((1, 2)), np.zeros((1, 3)), np.zeros((1, 2)))


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = {"w": np.array([1.5], dtype=np.float32)}
        g = {"w": np.zeros(1)}
        nn.Adam(lr=0.1).step(p, g)
        assert p["w"][0] == pytest.approx(1.5)

    def test_first_step_magnitude(self):
        # m_hat = v_hat = 1 for constant unit gradient -> step ~ lr
        p = {"w": np.array([2.0], dtype=np.float32)}
        opt = nn.Adam(lr=0.1)
        opt.step(p, {"w": np.ones(1)})
        assert p["w"][0] == pytest.approx(2.0 - 0.1, abs=1e-6)

    def test_nonfinite_gradient_skipped(self):
        p = {"w": np.array([1.0], dtype=np.float32)}
        opt = nn.Adam()
        ok = opt.step(p, {"w": np.array([np.nan])})
        assert not ok and opt.skipped == 1 and p["w"][0] == 1.0

    def test_deterministic_across_runs(self):
        def run():
            rng = np.random.default_rng(5)
            p = {"w": rng.normal(size=(4, 4)).astype(np.float32)}
            opt = nn.Adam(lr=1e-2)
            for _ in range(20):
                opt.step(p, {"w": rng.normal(size=(4, 4))})
            return p["w"]

        np.testing.assert_array_equal(run(), run())


def build_stack(rng, in_dim=6):
    """Dense + layer-norm + ELU + dense + tanh stack used by several checks."""
    return seq(
        nn.Dense(in_dim, 8, rng),
        nn.LayerNorm(8),
        nn.Elu(),
        nn.Dense(8, 4, rng),
        nn.Tanh(),
    )


class TestGradientCheck:
    def test_linear_network_near_machine_precision(self):
        rng = np.random.default_rng(0)
        net = seq(nn.Dense(5, 3, rng))
        x = rng.normal(size=(4, 5))
        report = nn.gradient_check(net, x, tolerance=1e-4)
        assert report.passed and report.max_rel_error < 1e-7

    def test_full_stack(self):
        rng = np.random.default_rng(1)
        net = build_stack(rng)
        x = rng.normal(size=(3, 6))
        report = nn.gradient_check(net, x, tolerance=1e-4)
        assert report.passed, report

    def test_conv_pool_stack(self):
        rng = np.random.default_rng(2)
        net = seq(
            nn.Conv2d(1, 2, 3, rng),
            nn.Elu(),
            nn.MaxPool2d(2),
            nn.Conv2d(2, 2, 3, rng),
            nn.LayerNorm((2, 3, 4)),
            nn.Flatten(),
            nn.Dense(24, 3, rng),
        )
        x = rng.normal(size=(2, 1, 6, 8))
        report = nn.gradient_check(net, x, tolerance=1e-4)
        assert report.passed, report

    def test_upsample_reshape_stack(self):
        rng = np.random.default_rng(3)
        net = seq(
            nn.Dense(5, 12, rng),
            nn.Elu(),
            nn.Reshape((3, 2, 2)),
            nn.Upsample2d(2),
            nn.Conv2d(3, 1, 3, rng),
            nn.Flatten(),
        )
        x = rng.normal(size=(2, 5))
        report = nn.gradient_check(net, x, tolerance=1e-4)
        assert report.passed, report

    def test_corrupted_backward_fails(self):
        class BrokenDense(nn.Dense):
            def backward(self, dout):
                dx = super().backward(dout)
                self.grads["w"] = self.grads["w"] * 1.5
                return dx

        rng = np.random.default_rng(4)
        net = seq(BrokenDense(5, 4, rng), nn.Tanh())
        x = rng.normal(size=(3, 5))
        report = nn.gradient_check(net, x, tolerance=1e-4)
        assert not report.passed

    def test_dropout_eval_mode_deterministic(self):
        rng = np.random.default_rng(6)
        net = seq(nn.Dense(4, 4, rng), nn.Dropout(0.5, np.random.default_rng(9)), nn.Tanh())
        x = rng.normal(size=(2, 4))
        np.testing.assert_array_equal(net.forward(x, train=False),
                                      net.forward(x, train=False))


class TestSerialization:
    def _params(self):
        rng = np.random.default_rng(12)
        return {
            "card.0.w": rng.normal(size=(4, 3)).astype(np.float32),
            "card.0.b": rng.normal(size=3).astype(np.float32),
            "trunk.2.g": rng.normal(size=(2, 2, 2)).astype(np.float32),
        }

    def test_round_trip_bitwise(self, tmp_path):
        named = self._params()
        path = tmp_path / "params.bin"
        nn.save_params(path, named)
        loaded = nn.load_params(path)
        assert set(loaded) == set(named)
        for k in named:
            np.testing.assert_array_equal(loaded[k], named[k])
            assert loaded[k].dtype == np.float32

    def test_truncated_blob_digest_error(self, tmp_path):
        path = tmp_path / "params.bin"
        nn.save_params(path, self._params())
        blob = path.read_bytes()
        path.write_bytes(blob[:-7])
        with pytest.raises(nn.BlobFormatError):
            nn.load_params(path)

    def test_bad_magic(self):
        with pytest.raises(nn.BlobFormatError):
            nn.parse_params(b"NOPE" + b"\x00" * 64)

    def test_flipped_byte_detected(self, tmp_path):
        path = tmp_path / "params.bin"
        nn.save_params(path, self._params())
        blob = bytearray(path.read_bytes())
        blob[20] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(nn.BlobFormatError):
            nn.load_params(path)


class TestSeedStreams:
    def test_named_streams_reproducible_and_distinct(self):
        s1 = nn.seed_streams(42, ["init", "dropout", "shuffle"])
        s2 = nn.seed_streams(42, ["init", "dropout", "shuffle"])
        a = s1["init"].standard_normal(8)
        b = s2["init"].standard_normal(8)
        np.testing.assert_array_equal(a, b)
        c = s2["dropout"].standard_normal(8)
        assert not np.array_equal(b, c)
