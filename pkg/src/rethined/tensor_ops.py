"""Dense tensor kernels: grouped 2-D convolution, batch normalization,
activations, row softmax, bilinear resize and Gaussian filtering.

Tensors are numpy float32 arrays laid out [C, H, W] (convolution weights are
[C_out, C_in/groups, S, S]).  Every function here is pure: inputs are never
mutated and results are deterministic for fixed inputs.  Reductions may use
wider accumulators internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float32


@dataclass(frozen=True)
class ConvSpec:
    """Weights and geometry of one grouped 2-D convolution.

    Kernels must be square and odd-sized, except patching convolutions where
    the kernel equals the stride (S == stride).
    """

    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        w = self.weights
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ValueError(f"conv weights must be [C_out, C_in/g, S, S], got {w.shape}")
        c_out, _, s, _ = w.shape
        if self.stride < 1 or self.padding < 0 or self.groups < 1:
            raise ValueError("stride must be >= 1, padding >= 0, groups >= 1")
        if c_out % self.groups:
            raise ValueError(f"C_out={c_out} not divisible by groups={self.groups}")
        if s % 2 == 0 and self.stride != s:
            raise ValueError("even kernel size is only valid for patching convs (stride == S)")
        if self.bias is not None and self.bias.shape != (c_out,):
            raise ValueError(f"bias shape {self.bias.shape} does not match C_out={c_out}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1] * self.groups

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-time batch normalization: running mean, running std (eps
    already folded in), scale and bias, all per channel."""

    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        shapes = {self.mu.shape, self.sigma.shape, self.gamma.shape, self.beta.shape}
        if len(shapes) != 1 or self.mu.ndim != 1:
            raise ValueError("batchnorm parameters must share a single [C] shape")
        if not np.all(self.sigma > 0):
            raise ValueError("batchnorm sigma must be strictly positive")

    @property
    def channels(self) -> int:
        return self.mu.shape[0]


def conv2d(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Grouped cross-correlation (no kernel flip) with zero padding.

    Output spatial extent (H + 2*padding - S) / stride + 1 must be integral.
    """
    if x.ndim != 3:
        raise ValueError(f"expected [C, H, W] input, got shape {x.shape}")
    c_in, h, w = x.shape
    if c_in != spec.in_channels:
        raise ValueError(f"input has {c_in} channels, conv expects {spec.in_channels}")
    s, pad, stride, g = spec.kernel_size, spec.padding, spec.stride, spec.groups
    h_num = h + 2 * pad - s
    w_num = w + 2 * pad - s
    if h_num < 0 or w_num < 0 or h_num % stride or w_num % stride:
        raise ValueError(
            f"kernel {s}, stride {stride}, padding {pad} do not tile input {h}x{w}"
        )
    h_out = h_num // stride + 1
    w_out = w_num // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (s, s), axis=(1, 2))[:, ::stride, ::stride]
    cpg = spec.in_channels // g
    opg = spec.out_channels // g
    win = win.reshape(g, cpg, h_out, w_out, s, s)
    wts = spec.weights.reshape(g, opg, cpg, s, s)
    out = np.einsum("gihwst,goist->gohw", win, wts, optimize=True)
    out = np.ascontiguousarray(out.reshape(spec.out_channels, h_out, w_out), dtype=DTYPE)
    if spec.bias is not None:
        out += spec.bias[:, None, None]
    return out


def batchnorm(x: np.ndarray, p: BatchNormParams) -> np.ndarray:
    """Per-channel affine normalization gamma*(x - mu)/sigma + beta."""
    if x.ndim != 3 or x.shape[0] != p.channels:
        raise ValueError(f"input shape {x.shape} does not match {p.channels} channels")
    out = p.gamma[:, None, None] * (x - p.mu[:, None, None]) / p.sigma[:, None, None]
    out += p.beta[:, None, None]
    return out.astype(DTYPE, copy=False)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {x.shape}")
    if np.isnan(x).any():
        raise ValueError("softmax input contains NaN")
    z = x.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    e /= e.sum(axis=1, keepdims=True)
    return e.astype(DTYPE)


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling, align-corners-false, edge-replicated.

    Resizing to the source size returns the input unchanged.
    """
    if x.ndim != 3:
        raise ValueError(f"expected [C, H, W] input, got shape {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output extents must be >= 1")
    c, h, w = x.shape
    if out_h == h and out_w == w:
        return x.astype(DTYPE, copy=True)
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0f = np.floor(ys)
    x0f = np.floor(xs)
    fy = (ys - y0f).astype(DTYPE)
    fx = (xs - x0f).astype(DTYPE)
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, h - 1)
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, w - 1)
    rows0 = x[:, y0, :]
    rows1 = x[:, y1, :]
    v00 = rows0[:, :, x0]
    v01 = rows0[:, :, x1]
    v10 = rows1[:, :, x0]
    v11 = rows1[:, :, x1]
    # lerp form keeps constant regions exact: a + t*(b - a) == a when a == b
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    out = top + fy[None, :, None] * (bot - top)
    return out.astype(DTYPE, copy=False)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps at integer offsets, radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete 2-D Gaussian of size k = 2*ceil(3*sigma) + 1, normalized to sum 1,
    shaped [1, 1, k, k]."""
    g = gaussian_kernel_1d(sigma)
    k2 = np.outer(g, g)
    k2 /= k2.sum()
    return k2.astype(DTYPE)[None, None]


def _reflect_indices(n: int, radius: int) -> np.ndarray:
    # mirror reflection without edge duplication, valid for any radius
    idx = np.arange(-radius, n + radius)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def _blur_axis(x: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """One separable pass in residual form: x + sum_t k_t * (x_t - x).

    The residual form makes locally constant data pass through bit-exactly,
    which the frequency decomposition depends on.  Taps must be symmetric
    (Gaussian kernels are); symmetric offsets are paired so each pair costs
    one fused (x_plus + x_minus - 2x) update.
    """
    n = x.shape[axis]
    radius = len(taps) // 2
    padded = np.take(x, _reflect_indices(n, radius), axis=axis)
    acc = np.zeros_like(x)
    tmp = np.empty_like(x)
    x2 = x + x
    sel = [slice(None)] * x.ndim
    for d in range(1, radius + 1):
        kv = taps[radius + d]
        sel[axis] = slice(radius + d, radius + d + n)
        plus = padded[tuple(sel)]
        sel[axis] = slice(radius - d, radius - d + n)
        minus = padded[tuple(sel)]
        np.add(plus, minus, out=tmp)
        tmp -= x2
        tmp *= kv
        acc += tmp
    return x + acc


def gaussian_blur(x: np.ndarray, sigma: float, sigma_x: Optional[float] = None) -> np.ndarray:
    """Separable Gaussian smoothing with reflect padding.

    `sigma` applies along H; `sigma_x` (defaults to `sigma`) along W.
    """
    if x.ndim != 3:
        raise ValueError(f"expected [C, H, W] input, got shape {x.shape}")
    if sigma <= 0 or (sigma_x is not None and sigma_x <= 0):
        raise ValueError("sigma must be positive")
    taps_y = gaussian_kernel_1d(sigma).astype(DTYPE)
    taps_x = taps_y if sigma_x is None or sigma_x == sigma else gaussian_kernel_1d(sigma_x).astype(DTYPE)
    out = _blur_axis(x.astype(DTYPE, copy=False), taps_x, axis=2)
    out = _blur_axis(out, taps_y, axis=1)
    return out


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    """Exact nearest-neighbor upsampling by an integer factor."""
    if x.ndim != 3:
        raise ValueError(f"expected [C, H, W] input, got shape {x.shape}")
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return x.copy()
    return np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)
