"""Tensor kernel tests: convolution, batchnorm, softmax, resize, Gaussian."""

import numpy as np
import pytest

from rethined.tensor_ops import (
    BatchNormParams,
    ConvSpec,
    batchnorm,
    bilinear_resize,
    conv2d,
    gaussian_blur,
    gaussian_kernel,
    gaussian_kernel_1d,
    relu,
    softmax_rows,
)

F32 = np.float32


def conv2d_oracle(x, weights, bias, stride, padding, groups):
    """Naive triple-loop grouped cross-correlation."""
    c_in, h, w = x.shape
    c_out, cpg, s, _ = weights.shape
    xp = np.zeros((c_in, h + 2 * padding, w + 2 * padding), np.float64)
    xp[:, padding:padding + h, padding:padding + w] = x
    h_out = (h + 2 * padding - s) // stride + 1
    w_out = (w + 2 * padding - s) // stride + 1
    out = np.zeros((c_out, h_out, w_out), np.float64)
    opg = c_out // groups
    for oc in range(c_out):
        g = oc // opg
        for oy in range(h_out):
            for ox in range(w_out):
                acc = 0.0
                for ic in range(cpg):
                    for ky in range(s):
                        for kx in range(s):
                            acc += (weights[oc, ic, ky, kx]
                                    * xp[g * cpg + ic, oy * stride + ky, ox * stride + kx])
                out[oc, oy, ox] = acc + (bias[oc] if bias is not None else 0.0)
    return out


class TestConv2d:
    def test_identity_1x1(self):
        rng = np.random.default_rng(0)
        x = rng.random((2, 5, 5)).astype(F32)
        spec = ConvSpec(np.eye(2, dtype=F32).reshape(2, 2, 1, 1))
        assert np.array_equal(conv2d(x, spec), x)

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.random((1, 4, 4)).astype(F32)
        w = rng.standard_normal((1, 1, 3, 3)).astype(F32)
        spec = ConvSpec(w, stride=1, padding=0)
        got = conv2d(x, spec)
        want = conv2d_oracle(x, w, None, 1, 0, 1)
        assert got.shape == (1, 2, 2)
        assert np.abs(got - want).max() < 1e-6

    @pytest.mark.parametrize("seed", range(6))
    def test_oracle_sweep_grouped(self, seed):
        rng = np.random.default_rng(seed)
        groups = int(rng.choice([1, 2, 4]))
        cpg_in = int(rng.integers(1, 3))
        opg = int(rng.integers(1, 3))
        c_in, c_out = groups * cpg_in, groups * opg
        s = int(rng.choice([1, 3]))
        stride = int(rng.choice([1, 2]))
        pad = int(rng.integers(0, 2))
        h = stride * int(rng.integers(2, 5)) + s - 2 * pad
        x = rng.standard_normal((c_in, h, h)).astype(F32)
        w = rng.standard_normal((c_out, cpg_in, s, s)).astype(F32)
        b = rng.standard_normal(c_out).astype(F32)
        spec = ConvSpec(w, b, stride=stride, padding=pad, groups=groups)
        got = conv2d(x, spec)
        want = conv2d_oracle(x, w, b, stride, pad, groups)
        assert np.abs(got - want).max() < 1e-5

    def test_zero_weights_annihilate(self):
        x = np.random.default_rng(2).random((3, 6, 6)).astype(F32)
        spec = ConvSpec(np.zeros((4, 3, 3, 3), F32), stride=1, padding=1)
        out = conv2d(x, spec)
        assert out.shape == (4, 6, 6)
        assert np.array_equal(out, np.zeros_like(out))

    def test_depthwise_identity_exact(self):
        rng = np.random.default_rng(3)
        x = rng.random((5, 7, 9)).astype(F32)
        w = np.zeros((5, 1, 3, 3), F32)
        w[:, 0, 1, 1] = 1.0
        out = conv2d(x, ConvSpec(w, stride=1, padding=1, groups=5))
        assert np.array_equal(out, x)

    @pytest.mark.parametrize("seed", range(4))
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 6, 6)).astype(F32)
        y = rng.standard_normal((2, 6, 6)).astype(F32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(F32)
        spec = ConvSpec(w, stride=1, padding=1)
        a, b = F32(rng.uniform(-2, 2)), F32(rng.uniform(-2, 2))
        lhs = conv2d(a * x + b * y, spec)
        rhs = a * conv2d(x, spec) + b * conv2d(y, spec)
        assert np.abs(lhs - rhs).max() < 1e-5

    def test_channel_mismatch_rejected(self):
        x = np.zeros((2, 4, 4), F32)
        spec = ConvSpec(np.zeros((1, 3, 1, 1), F32))
        with pytest.raises(ValueError):
            conv2d(x, spec)

    def test_non_integral_output_rejected(self):
        x = np.zeros((1, 6, 6), F32)
        spec = ConvSpec(np.zeros((1, 1, 3, 3), F32), stride=2, padding=1)
        with pytest.raises(ValueError):
            conv2d(x, spec)

    def test_even_kernel_requires_matching_stride(self):
        with pytest.raises(ValueError):
            ConvSpec(np.zeros((1, 1, 2, 2), F32), stride=1)
        ConvSpec(np.zeros((1, 1, 2, 2), F32), stride=2)  # patching conv is fine


class TestBatchNorm:
    def test_identity_params(self):
        x = np.random.default_rng(0).standard_normal((3, 4, 4)).astype(F32)
        p = BatchNormParams(np.zeros(3, F32), np.ones(3, F32), np.ones(3, F32), np.zeros(3, F32))
        assert np.array_equal(batchnorm(x, p), x)

    def test_zero_gamma_gives_bias(self):
        x = np.random.default_rng(1).standard_normal((2, 3, 3)).astype(F32)
        p = BatchNormParams(np.zeros(2, F32), np.ones(2, F32), np.zeros(2, F32),
                            np.full(2, 5.0, F32))
        assert np.array_equal(batchnorm(x, p), np.full_like(x, 5.0))

    def test_matches_scalar_formula(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 3, 3)).astype(F32)
        p = BatchNormParams(
            rng.standard_normal(2).astype(F32),
            rng.uniform(0.5, 2.0, 2).astype(F32),
            rng.standard_normal(2).astype(F32),
            rng.standard_normal(2).astype(F32),
        )
        got = batchnorm(x, p)
        for c in range(2):
            for i in range(3):
                for j in range(3):
                    want = p.gamma[c] * (x[c, i, j] - p.mu[c]) / p.sigma[c] + p.beta[c]
                    assert abs(got[c, i, j] - want) < 1e-6

    @pytest.mark.parametrize("seed", range(4))
    def test_analytic_inverse_recovers_input(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((3, 5, 5)).astype(F32)
        p = BatchNormParams(
            rng.standard_normal(3).astype(F32),
            rng.uniform(0.5, 2.0, 3).astype(F32),
            rng.uniform(0.5, 2.0, 3).astype(F32),  # gamma != 0
            rng.standard_normal(3).astype(F32),
        )
        y = batchnorm(x, p)
        back = (y - p.beta[:, None, None]) / p.gamma[:, None, None] * p.sigma[:, None, None] \
            + p.mu[:, None, None]
        assert np.abs(back - x).max() < 1e-5

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(ValueError):
            BatchNormParams(np.zeros(1, F32), np.zeros(1, F32), np.ones(1, F32), np.zeros(1, F32))


class TestRelu:
    def test_all_negative(self):
        assert np.array_equal(relu(np.array([-3.0, -0.5], F32)), np.zeros(2, F32))

    def test_all_positive_identity(self):
        x = np.array([0.5, 2.0], F32)
        assert np.array_equal(relu(x), x)

    def test_mixed(self):
        assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0], F32)),
                              np.array([0.0, 0.0, 2.0], F32))


class TestSoftmaxRows:
    def test_uniform_rows(self):
        out = softmax_rows(np.full((3, 4), 2.5, F32))
        assert np.abs(out - 0.25).max() < 1e-6

    def test_analytic_log2_row(self):
        out = softmax_rows(np.array([[0.0, np.log(2.0)]], F32))
        assert np.abs(out - np.array([[1 / 3, 2 / 3]])).max() < 1e-6

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 6)).astype(F32)
        shifted = x + rng.standard_normal((4, 1)).astype(F32)
        assert np.abs(softmax_rows(x) - softmax_rows(shifted)).max() < 1e-6

    @pytest.mark.parametrize("scale", [1.0, 1e4])
    def test_rows_sum_to_one(self, scale):
        rng = np.random.default_rng(1)
        x = (rng.standard_normal((8, 32)) * scale).astype(F32)
        out = softmax_rows(x)
        assert (out >= 0).all()
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-6

    def test_nan_rejected(self):
        x = np.array([[0.0, np.nan]], F32)
        with pytest.raises(ValueError):
            softmax_rows(x)


def bilinear_oracle(x, out_h, out_w):
    """Per-pixel align-corners-false sampling formula."""
    c, h, w = x.shape
    out = np.zeros((c, out_h, out_w), np.float64)
    for i in range(out_h):
        for j in range(out_w):
            sy = (i + 0.5) * h / out_h - 0.5
            sx = (j + 0.5) * w / out_w - 0.5
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            fy, fx = sy - y0, sx - x0
            y0c, y1c = np.clip([y0, y0 + 1], 0, h - 1)
            x0c, x1c = np.clip([x0, x0 + 1], 0, w - 1)
            for ch in range(c):
                top = x[ch, y0c, x0c] * (1 - fx) + x[ch, y0c, x1c] * fx
                bot = x[ch, y1c, x0c] * (1 - fx) + x[ch, y1c, x1c] * fx
                out[ch, i, j] = top * (1 - fy) + bot * fy
    return out


class TestBilinearResize:
    def test_same_size_identity(self):
        x = np.random.default_rng(0).random((3, 5, 7)).astype(F32)
        assert np.array_equal(bilinear_resize(x, 5, 7), x)

    @pytest.mark.parametrize("out_h,out_w", [(3, 3), (8, 8), (2, 9)])
    def test_constant_preserved(self, out_h, out_w):
        x = np.full((2, 4, 6), 0.37, F32)
        out = bilinear_resize(x, out_h, out_w)
        assert np.array_equal(out, np.full((2, out_h, out_w), F32(0.37)))

    def test_2x2_to_4x4_matches_formula(self):
        x = np.array([[[0.0, 1.0], [2.0, 3.0]]], F32)
        got = bilinear_resize(x, 4, 4)
        want = bilinear_oracle(x, 4, 4)
        assert np.abs(got - want).max() < 1e-6

    @pytest.mark.parametrize("seed", range(3))
    def test_random_resize_matches_formula(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.random((2, 5, 4)).astype(F32)
        out_h, out_w = int(rng.integers(1, 11)), int(rng.integers(1, 11))
        got = bilinear_resize(x, out_h, out_w)
        want = bilinear_oracle(x, out_h, out_w)
        assert np.abs(got - want).max() < 1e-6


def blur_oracle_2d(x, kernel2d):
    """Direct 2-D correlation with reflect padding."""
    c, h, w = x.shape
    k = kernel2d.shape[0]
    r = k // 2

    def refl(i, n):
        period = 2 * (n - 1)
        i = i % period
        return period - i if i >= n else i

    out = np.zeros_like(x, dtype=np.float64)
    for ch in range(c):
        for y in range(h):
            for xx in range(w):
                acc = 0.0
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        acc += kernel2d[dy + r, dx + r] * x[ch, refl(y + dy, h), refl(xx + dx, w)]
                out[ch, y, xx] = acc
    return out


class TestGaussian:
    @pytest.mark.parametrize("sigma", [0.3, 0.8, 1.5, 3.0])
    def test_kernel_sums_to_one(self, sigma):
        k = gaussian_kernel(sigma)
        assert k.shape[2] == 2 * int(np.ceil(3 * sigma)) + 1
        assert abs(float(k.sum()) - 1.0) < 1e-6

    def test_sigma_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            gaussian_kernel(0.0)
        with pytest.raises(ValueError):
            gaussian_blur(np.zeros((1, 4, 4), F32), -1.0)

    def test_near_delta_small_sigma(self):
        rng = np.random.default_rng(0)
        x = rng.random((3, 8, 8)).astype(F32)
        blurred = gaussian_blur(x, 0.3)
        assert np.abs(blurred - x).max() < 0.05
        oracle = blur_oracle_2d(x, gaussian_kernel(0.3)[0, 0].astype(np.float64))
        assert np.abs(blurred - oracle).max() < 1e-5

    @pytest.mark.parametrize("sigma", [0.5, 1.2])
    def test_constant_image_bit_exact(self, sigma):
        x = np.full((3, 10, 12), 0.61, F32)
        assert np.array_equal(gaussian_blur(x, sigma), x)

    @pytest.mark.parametrize("seed,sigma", [(0, 0.7), (1, 1.4), (2, 2.2)])
    def test_matches_direct_2d_oracle(self, seed, sigma):
        rng = np.random.default_rng(seed)
        x = rng.random((1, 9, 9)).astype(F32)
        got = gaussian_blur(x, sigma)
        want = blur_oracle_2d(x, gaussian_kernel(sigma)[0, 0].astype(np.float64))
        assert np.abs(got - want).max() < 1e-5

    @pytest.mark.parametrize("sigma", [0.6, 1.8])
    def test_blur_respects_range(self, sigma):
        rng = np.random.default_rng(4)
        x = rng.random((3, 16, 16)).astype(F32)
        out = gaussian_blur(x, sigma)
        assert out.max() <= x.max() + 1e-6
        assert out.min() >= x.min() - 1e-6

    def test_separable_matches_1d_composition(self):
        g = gaussian_kernel_1d(1.1)
        k2 = gaussian_kernel(1.1)[0, 0]
        assert np.abs(np.outer(g, g) - k2).max() < 1e-7
