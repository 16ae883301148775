"""Coarse completion network: five reparametrizable depthwise/pointwise
blocks in a small encoder-decoder, plus inference-time conv+BN+skip fusion.

Each block runs a 3x3 depthwise convolution (with an optional identity+BN
skip summed onto that stage when stride is 1) followed by a 1x1 pointwise
convolution, both batch-normalized and ReLU-activated.  Fusion folds every
BN into its convolution (W_hat = W * gamma/sigma, b_hat = beta - gamma*mu/sigma
+ gamma/sigma * b) and materializes the skip as a center-one kernel padded by
S - 1 zeros, leaving a single convolution per stage.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .tensor_ops import (
    DTYPE,
    BatchNormParams,
    ConvSpec,
    batchnorm,
    conv2d,
    relu,
    upsample_nearest,
)

# (C_in, C_out, stride, skip) per block; dec1 (index 3) is the feature tap.
# All blocks are stride 1 with a depthwise-stage skip; the encoder decimates
# by 2 after each of its three stages (strided 3x3 convs cannot satisfy the
# integral-output contract on even extents).
BLOCK_PLAN = ((4, 16, 1, True), (16, 32, 1, True), (32, 64, 1, True),
              (64, 32, 1, True), (32, 16, 1, True))
FEATURE_TAP = 3
FEATURE_CHANNELS = 32
ENCODER_FACTOR = 8  # three 2x decimations


@dataclass(frozen=True)
class RepBlock:
    """One depthwise+pointwise stage pair; BN fields are None once fused."""

    main: ConvSpec
    main_bn: Optional[BatchNormParams]
    point: ConvSpec
    point_bn: Optional[BatchNormParams]
    skip_bn: Optional[BatchNormParams]
    fused: bool = False

    def __post_init__(self):
        if self.skip_bn is not None and self.main.stride != 1:
            raise ValueError("identity skip requires stride 1")
        if self.fused and (self.main_bn or self.point_bn or self.skip_bn):
            raise ValueError("fused block must not retain batchnorm parameters")


@dataclass(frozen=True)
class CoarseModel:
    blocks: tuple
    final: ConvSpec
    feature_tap: int = FEATURE_TAP
    fused: bool = False


def rep_block_forward(block: RepBlock, x: np.ndarray) -> np.ndarray:
    if block.fused:
        y = relu(conv2d(x, block.main))
        return relu(conv2d(y, block.point))
    y = batchnorm(conv2d(x, block.main), block.main_bn)
    if block.skip_bn is not None:
        y = y + batchnorm(x, block.skip_bn)
    y = relu(y)
    return relu(batchnorm(conv2d(y, block.point), block.point_bn))


def coarse_forward(model: CoarseModel, x_lr: np.ndarray, mask_lr: np.ndarray):
    """Run the coarse network on a masked LR image.

    Returns (coarse, features): the [3, H, W] completion (residual applied
    only inside corrupted pixels) and the tapped [32, H/8, W/8] feature map.
    """
    if x_lr.ndim != 3 or x_lr.shape[0] != 3:
        raise ValueError(f"expected [3, H, W] image, got shape {x_lr.shape}")
    if mask_lr.shape != (1,) + x_lr.shape[1:]:
        raise ValueError(f"mask shape {mask_lr.shape} does not match image {x_lr.shape}")
    _, h, w = x_lr.shape
    if h % ENCODER_FACTOR or w % ENCODER_FACTOR:
        raise ValueError(f"input {h}x{w} not divisible by encoder factor {ENCODER_FACTOR}")
    if not np.isin(mask_lr, (0, 1)).all():
        raise ValueError("mask values must be binary {0, 1}")

    x = np.concatenate([x_lr, mask_lr], axis=0).astype(DTYPE, copy=False)
    features = None
    for i, block in enumerate(model.blocks):
        if i == 4:
            x = upsample_nearest(x, 2)
        x = rep_block_forward(block, x)
        if i < 3:
            x = np.ascontiguousarray(x[:, ::2, ::2])  # encoder decimation
        if i == model.feature_tap:
            features = x
    x = upsample_nearest(x, 4)
    residual = conv2d(x, model.final)
    coarse = x_lr + residual * mask_lr
    return coarse.astype(DTYPE, copy=False), features


def _fuse_conv_bn(spec: ConvSpec, bn: BatchNormParams):
    # fold in float64, round once at the end
    factor = bn.gamma.astype(np.float64) / bn.sigma.astype(np.float64)
    w = spec.weights.astype(np.float64) * factor[:, None, None, None]
    b = bn.beta.astype(np.float64) - bn.mu.astype(np.float64) * factor
    if spec.bias is not None:
        b = b + spec.bias.astype(np.float64) * factor
    return w.astype(DTYPE), b.astype(DTYPE)


def fuse_block(block: RepBlock) -> RepBlock:
    """Fold batchnorms (and the identity skip, if any) into plain convolutions."""
    if block.fused:
        raise ValueError("block is already fused")
    w_main, b_main = _fuse_conv_bn(block.main, block.main_bn)
    if block.skip_bn is not None:
        s = block.main.kernel_size
        factor = block.skip_bn.gamma.astype(np.float64) / block.skip_bn.sigma.astype(np.float64)
        # 1x1 identity conv padded by S - 1 zeros: one center tap per channel
        w64 = w_main.astype(np.float64)
        w64[:, 0, s // 2, s // 2] += factor
        w_main = w64.astype(DTYPE)
        b_main = (b_main.astype(np.float64) + block.skip_bn.beta.astype(np.float64)
                  - block.skip_bn.mu.astype(np.float64) * factor).astype(DTYPE)
    main = ConvSpec(w_main, b_main.astype(DTYPE), block.main.stride,
                    block.main.padding, block.main.groups)
    w_pt, b_pt = _fuse_conv_bn(block.point, block.point_bn)
    point = ConvSpec(w_pt, b_pt, block.point.stride, block.point.padding, block.point.groups)
    return RepBlock(main, None, point, None, None, fused=True)


def fuse_model(model: CoarseModel) -> CoarseModel:
    """Return a forward-equivalent model with every block fused."""
    if model.fused:
        raise ValueError("model is already fused")
    return replace(model, blocks=tuple(fuse_block(b) for b in model.blocks), fused=True)


def parameter_count(model: CoarseModel) -> int:
    total = 0
    for block in model.blocks:
        for spec in (block.main, block.point):
            total += spec.weights.size
            if spec.bias is not None:
                total += spec.bias.size
        for bn in (block.main_bn, block.point_bn, block.skip_bn):
            if bn is not None:
                total += bn.mu.size * 4
    total += model.final.weights.size
    if model.final.bias is not None:
        total += model.final.bias.size
    return total


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


def _random_bn(rng: np.random.Generator, channels: int) -> BatchNormParams:
    # near-neutral scales keep activations O(1) through chained blocks
    return BatchNormParams(
        mu=rng.uniform(-0.1, 0.1, channels).astype(DTYPE),
        sigma=rng.uniform(0.8, 1.25, channels).astype(DTYPE),
        gamma=rng.uniform(0.8, 1.25, channels).astype(DTYPE),
        beta=rng.uniform(-0.1, 0.1, channels).astype(DTYPE),
    )


def random_rep_block(rng: np.random.Generator, c_in: int, c_out: int, stride: int,
                     skip: bool, conv_bias: bool = False) -> RepBlock:
    main = ConvSpec(
        _he_uniform(rng, (c_in, 1, 3, 3), 9),
        _he_uniform(rng, (c_in,), 9) if conv_bias else None,
        stride=stride, padding=1, groups=c_in,
    )
    point = ConvSpec(
        _he_uniform(rng, (c_out, c_in, 1, 1), c_in),
        _he_uniform(rng, (c_out,), c_in) if conv_bias else None,
        stride=1, padding=0, groups=1,
    )
    return RepBlock(
        main=main,
        main_bn=_random_bn(rng, c_in),
        point=point,
        point_bn=_random_bn(rng, c_out),
        skip_bn=_random_bn(rng, c_in) if skip else None,
    )


def _calibrated_bn(rng: np.random.Generator, pre: np.ndarray) -> BatchNormParams:
    # running stats taken from the probe activations, as training would leave them
    return BatchNormParams(
        mu=pre.mean(axis=(1, 2)).astype(DTYPE),
        sigma=np.maximum(pre.std(axis=(1, 2)), 0.05).astype(DTYPE),
        gamma=rng.uniform(0.85, 1.15, pre.shape[0]).astype(DTYPE),
        beta=rng.uniform(-0.05, 0.05, pre.shape[0]).astype(DTYPE),
    )


def random_coarse_model(rng: np.random.Generator) -> CoarseModel:
    """He-uniform weights with BN running stats calibrated on a seeded probe,
    so chained activations stay O(1) and fusion noise stays well under 1e-5."""
    stages = []
    for ci, co, st, sk in BLOCK_PLAN:
        main = ConvSpec(_he_uniform(rng, (ci, 1, 3, 3), 9), None,
                        stride=st, padding=1, groups=ci)
        point = ConvSpec(_he_uniform(rng, (co, ci, 1, 1), ci), None)
        stages.append((main, point, sk))
    # damped final projection keeps the residual near image range
    final = ConvSpec(
        _he_uniform(rng, (3, BLOCK_PLAN[-1][1], 1, 1), BLOCK_PLAN[-1][1]) * DTYPE(0.25),
        _he_uniform(rng, (3,), BLOCK_PLAN[-1][1]) * DTYPE(0.25),
    )
    probe_img = rng.random((3, 128, 128)).astype(DTYPE)
    probe_mask = (rng.random((1, 128, 128)) < 0.4).astype(DTYPE)
    x = np.concatenate([probe_img * (1.0 - probe_mask), probe_mask], axis=0)
    blocks = []
    for i, (main, point, sk) in enumerate(stages):
        if i == 4:
            x = upsample_nearest(x, 2)
        pre = conv2d(x, main)
        main_bn = _calibrated_bn(rng, pre)
        y = batchnorm(pre, main_bn)
        skip_bn = None
        if sk:
            skip_bn = _calibrated_bn(rng, x)
            y = y + batchnorm(x, skip_bn)
        y = relu(y)
        pre2 = conv2d(y, point)
        point_bn = _calibrated_bn(rng, pre2)
        x = relu(batchnorm(pre2, point_bn))
        if i < 3:
            x = np.ascontiguousarray(x[:, ::2, ::2])
        blocks.append(RepBlock(main, main_bn, point, point_bn, skip_bn))
    return CoarseModel(blocks=tuple(blocks), final=final)
