import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from spikenas import tensor as te
from spikenas.errors import ShapeError


def naive_conv(x, k, pad):
    """Direct loop convolution (cross-correlation), stride 1."""
    n, c, h, w = x.shape
    co, ci, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh, ow = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    out = np.zeros((n, co, oh, ow))
    for b in range(n):
        for o in range(co):
            for y in range(oh):
                for z in range(ow):
                    out[b, o, y, z] = np.sum(xp[b, :, y:y + kh, z:z + kw] * k[o])
    return out


def t(a):
    return torch.tensor(np.asarray(a, dtype=np.float32))


class TestConv:
    def test_identity_1x1(self):
        x = torch.ones(1, 1, 3, 3)
        out = te.conv2d(x, te.ConvWeights(torch.ones(1, 1, 1, 1)))
        assert torch.equal(out, x)

    def test_hand_3x3(self):
        x = t([[[[1, 2], [3, 4]]]])
        out = te.conv2d(x, te.ConvWeights(torch.ones(1, 1, 3, 3), padding=1))
        assert out.tolist() == [[[[10.0, 10.0], [10.0, 10.0]]]]

    def test_zero_kernel(self):
        x = torch.randn(2, 3, 5, 5)
        assert torch.count_nonzero(te.conv2d(x, te.ConvWeights(torch.zeros(4, 3, 3, 3)))) == 0

    def test_default_padding_preserves_size(self):
        x = torch.randn(2, 3, 6, 7)
        for k in (1, 3):
            assert te.conv2d(x, te.ConvWeights(torch.randn(5, 3, k, k))).shape == (2, 5, 6, 7)

    @pytest.mark.parametrize("k", [1, 3])
    def test_against_loop_oracle(self, k):
        rng = np.random.default_rng(k)
        x = rng.standard_normal((2, 3, 5, 6))
        w = rng.standard_normal((4, 3, k, k))
        got = te.conv2d(t(x), te.ConvWeights(t(w))).double().numpy()
        np.testing.assert_allclose(got, naive_conv(x, w, k // 2), rtol=1e-5, atol=1e-5)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            te.conv2d(torch.ones(1, 2, 3, 3), te.ConvWeights(torch.ones(1, 3, 1, 1)))

    def test_rejects_unsupported_kernel(self):
        with pytest.raises(ShapeError):
            te.ConvWeights(torch.ones(1, 1, 5, 5))

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**31))
    def test_linearity(self, a, b, seed):
        g = torch.Generator().manual_seed(seed)
        x, y = torch.randn(2, 2, 4, 4, generator=g), torch.randn(2, 2, 4, 4, generator=g)
        w = te.ConvWeights(torch.randn(3, 2, 3, 3, generator=g))
        lhs = te.conv2d(a * x + b * y, w)
        rhs = a * te.conv2d(x, w) + b * te.conv2d(y, w)
        scale = max(1.0, float(rhs.abs().max()))
        assert float((lhs - rhs).abs().max()) <= 1e-5 * scale


class TestAvgPool:
    def test_constant_interior(self):
        x = torch.full((1, 2, 5, 5), 5.0)
        out = te.avgpool2d(x, 3, stride=1, padding=1)
        assert torch.all(out[:, :, 1:-1, 1:-1] == 5.0)

    def test_hand_2x2(self):
        assert te.avgpool2d(t([[[[1, 2], [3, 4]]]]), 2, stride=2).item() == 2.5

    def test_count_include_pad(self):
        out = te.avgpool2d(t([[[[9.0]]]]), 3, stride=1, padding=1)
        assert out.item() == pytest.approx(1.0)

    def test_corner_divides_by_nine(self):
        out = te.avgpool2d(torch.ones(1, 1, 4, 4), 3, stride=1, padding=1)
        assert out[0, 0, 0, 0].item() == pytest.approx(4 / 9)

    def test_window_too_large(self):
        with pytest.raises(ShapeError):
            te.avgpool2d(torch.ones(1, 1, 1, 1), 2, stride=2)

    @settings(max_examples=25, deadline=None)
    @given(value=st.floats(-100, 100), h=st.integers(3, 8), w=st.integers(3, 8))
    def test_constant_property(self, value, h, w):
        x = torch.full((1, 1, h, w), value)
        out = te.avgpool2d(x, 3, stride=1, padding=1)[:, :, 1:-1, 1:-1]
        assert torch.allclose(out, torch.full_like(out, value), rtol=1e-6, atol=1e-5)


class TestBatchNorm:
    def test_standardizes(self):
        g = torch.Generator().manual_seed(0)
        x = 3.0 + 2.0 * torch.randn(64, 2, 6, 6, generator=g)
        out = te.batchnorm_batchstats(x, torch.ones(2), torch.zeros(2))
        mean = out.mean(dim=(0, 2, 3))
        var = out.var(dim=(0, 2, 3), unbiased=False)
        assert torch.allclose(mean, torch.zeros(2), atol=1e-5)
        assert torch.allclose(var, torch.ones(2), atol=1e-3)

    def test_constant_channel_maps_to_beta(self):
        x = torch.full((4, 2, 3, 3), 7.0)
        beta = torch.tensor([0.5, -1.0])
        out = te.batchnorm_batchstats(x, torch.ones(2), beta)
        # float32 round-off in the batch mean is amplified by 1/sqrt(eps)
        assert torch.allclose(out, beta.view(1, 2, 1, 1).expand_as(out), atol=1e-4)

    @settings(max_examples=20, deadline=None)
    @given(gamma=st.floats(-3, 3).filter(lambda g: abs(g) > 0.1), beta=st.floats(-3, 3),
           seed=st.integers(0, 10_000))
    def test_affine_statistics(self, gamma, beta, seed):
        g = torch.Generator().manual_seed(seed)
        x = 10.0 * torch.randn(32, 1, 8, 8, generator=g) - 4.0
        out = te.batchnorm_batchstats(x.double(), torch.tensor([gamma]).double(),
                                      torch.tensor([beta]).double())
        assert abs(float(out.mean()) - beta) < 1e-4
        assert abs(float(out.std(unbiased=False)) - abs(gamma)) < 1e-4

    def test_needs_two_samples(self):
        with pytest.raises(ShapeError):
            te.batchnorm_batchstats(torch.ones(1, 1, 2, 2), torch.ones(1), torch.zeros(1))

    def test_running_update_does_not_change_output(self):
        x = torch.randn(8, 3, 4, 4)
        gamma, beta = torch.ones(3), torch.zeros(3)
        rm, rv = torch.zeros(3), torch.ones(3)
        a = te.batchnorm_batchstats(x, gamma, beta)
        b = te.batchnorm_batchstats(x, gamma, beta, running_mean=rm, running_var=rv, momentum=0.1)
        assert torch.equal(a, b)
        assert torch.allclose(rm, 0.1 * x.mean(dim=(0, 2, 3)))

    def test_fixed_stats(self):
        x = torch.randn(2, 2, 3, 3)
        mean, var = torch.tensor([1.0, -1.0]), torch.tensor([4.0, 0.25])
        out = te.batchnorm_fixed(x, mean, var, torch.ones(2), torch.zeros(2), eps=0.0)
        expected = (x - mean.view(1, 2, 1, 1)) / var.sqrt().view(1, 2, 1, 1)
        assert torch.allclose(out, expected, atol=1e-6)

    def test_deterministic(self):
        x = torch.randn(4, 3, 5, 5)
        a = te.batchnorm_batchstats(x, torch.ones(3), torch.zeros(3))
        b = te.batchnorm_batchstats(x.clone(), torch.ones(3), torch.zeros(3))
        assert torch.equal(a, b)


class TestLinear:
    def test_identity(self):
        x = torch.randn(3, 4)
        assert torch.equal(te.linear(x, torch.eye(4), torch.zeros(4)), x)

    def test_row_sum(self):
        assert te.linear(torch.ones(1, 7), torch.ones(1, 7), torch.zeros(1)).item() == 7.0

    def test_hand_2x2(self):
        out = te.linear(t([[1, 2]]), t([[1, 2], [3, 4]]), t([0.5, -0.5]))
        # [1*1 + 2*2 + 0.5, 1*3 + 2*4 - 0.5]
        assert out.tolist() == [[5.5, 10.5]]

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            te.linear(torch.ones(1, 3), torch.ones(2, 4))


class TestDropout:
    def test_identity_when_not_training(self):
        x = torch.randn(4, 8)
        assert torch.equal(te.dropout(x, 0.5, False), x)

    def test_inverted_scaling(self):
        g = torch.Generator().manual_seed(0)
        out = te.dropout(torch.ones(100_000), 0.5, True, g)
        assert set(out.unique().tolist()) <= {0.0, 2.0}
        assert abs(float(out.mean()) - 1.0) < 0.02


class TestHeInit:
    def test_deterministic(self):
        a = te.he_init((8, 4, 3, 3), np.random.default_rng(5))
        b = te.he_init((8, 4, 3, 3), np.random.default_rng(5))
        assert a.dtype == np.float32 and np.array_equal(a, b)

    def test_statistics(self):
        w = te.he_init((1000, 100), np.random.default_rng(0)).astype(np.float64).ravel()
        target = math.sqrt(2 / 100)
        assert abs(w.std() - target) / target < 0.02
        assert abs(w.mean()) < 3 * target / math.sqrt(w.size)

    def test_fan_in_of_conv(self):
        assert te.fan_in((16, 3, 3, 3)) == 27
        with pytest.raises(ShapeError):
            te.fan_in((5,))


def test_tensor4_checks():
    with pytest.raises(ShapeError):
        te.check4(torch.ones(2, 3))
    with pytest.raises(ShapeError):
        te.check4(torch.ones(0, 1, 2, 2))
