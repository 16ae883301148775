"""End-to-end orchestration: configuration, the full model bundle, weight
(de)serialization, and the HR -> LR -> HR inpainting chain.

The chain: anti-alias blur + bilinear downsample to the LR working size,
coarse completion, masked patch-attention refinement, then HR composition
that reuses the LR attention map for high-frequency mixing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .attention import NpmWeights, ProjectionWeights, npm_refine
from .coarse import (
    BLOCK_PLAN,
    ENCODER_FACTOR,
    FEATURE_CHANNELS,
    BatchNormParams,
    CoarseModel,
    ConvSpec,
    RepBlock,
    coarse_forward,
    fuse_model,
    random_coarse_model,
    _he_uniform,
)
from .tensor_ops import DTYPE, _reflect_indices, bilinear_resize, gaussian_kernel_1d
from .upscale import compose_hr, sigma_for_factor
from .weights_io import WeightFormatError, load_tensors, save_tensors


@dataclass(frozen=True)
class PipelineConfig:
    """Working parameters of the pipeline.

    d_k defaults to 64 to keep desk runs fast; much larger embeddings
    (e.g. 2048) work unchanged but cost accordingly on CPU.
    """

    lr_size: int = 256
    patch_size: int = 8
    d_k: int = 64
    composite: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lr_size < ENCODER_FACTOR or self.lr_size % ENCODER_FACTOR:
            raise ValueError(f"lr_size must be a positive multiple of {ENCODER_FACTOR}")
        if self.patch_size < 1 or self.lr_size % self.patch_size:
            raise ValueError("lr_size must be divisible by patch_size")
        if self.d_k < 1:
            raise ValueError("d_k must be >= 1")

    @property
    def grid(self) -> int:
        return self.lr_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid * self.grid


@dataclass(frozen=True)
class InpaintingModel:
    coarse: CoarseModel
    npm: NpmWeights

    @property
    def fused(self) -> bool:
        return self.coarse.fused


def random_model(config: PipelineConfig, seed: int | None = None) -> InpaintingModel:
    """Deterministic He-uniform initialized model for untrained runs."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    coarse = random_coarse_model(rng)
    p2 = 3 * config.patch_size * config.patch_size
    token_width = config.d_k + FEATURE_CHANNELS
    npm = NpmWeights(
        embed=_he_uniform(rng, (p2, config.d_k), p2),
        proj=ProjectionWeights(
            m_q=_he_uniform(rng, (token_width, config.d_k), token_width),
            m_k=_he_uniform(rng, (token_width, config.d_k), token_width),
        ),
    )
    return InpaintingModel(coarse=coarse, npm=npm)


def fuse_pipeline_model(model: InpaintingModel) -> InpaintingModel:
    return replace(model, coarse=fuse_model(model.coarse))


# --- weight container mapping -------------------------------------------------

def model_to_tensors(model: InpaintingModel) -> dict:
    out: dict[str, np.ndarray] = {}
    for i, block in enumerate(model.coarse.blocks):
        for stage, spec, bn in (("main", block.main, block.main_bn),
                                ("point", block.point, block.point_bn)):
            out[f"blocks.{i}.{stage}.weight"] = spec.weights
            if spec.bias is not None:
                out[f"blocks.{i}.{stage}.bias"] = spec.bias
            if bn is not None:
                for field in ("mu", "sigma", "gamma", "beta"):
                    out[f"blocks.{i}.{stage}.bn.{field}"] = getattr(bn, field)
        if block.skip_bn is not None:
            for field in ("mu", "sigma", "gamma", "beta"):
                out[f"blocks.{i}.skip.bn.{field}"] = getattr(block.skip_bn, field)
    out["final.weight"] = model.coarse.final.weights
    out["final.bias"] = model.coarse.final.bias
    out["npm.embed"] = model.npm.embed
    out["npm.m_q"] = model.npm.proj.m_q
    out["npm.m_k"] = model.npm.proj.m_k
    return out


def _bn_from(tensors: dict, prefix: str):
    keys = [f"{prefix}.{f}" for f in ("mu", "sigma", "gamma", "beta")]
    present = [k in tensors for k in keys]
    if not any(present):
        return None
    if not all(present):
        raise WeightFormatError(f"incomplete batchnorm parameter set at '{prefix}'")
    return BatchNormParams(*(tensors[k] for k in keys))


def model_from_tensors(tensors: dict) -> InpaintingModel:
    blocks = []
    for i, (c_in, _c_out, stride, _skip) in enumerate(BLOCK_PLAN):
        try:
            w_main = tensors[f"blocks.{i}.main.weight"]
            w_point = tensors[f"blocks.{i}.point.weight"]
        except KeyError as exc:
            raise WeightFormatError(f"missing tensor {exc} in weight container") from None
        main = ConvSpec(
            w_main, tensors.get(f"blocks.{i}.main.bias"),
            stride=stride, padding=w_main.shape[2] // 2, groups=w_main.shape[0],
        )
        point = ConvSpec(w_point, tensors.get(f"blocks.{i}.point.bias"))
        main_bn = _bn_from(tensors, f"blocks.{i}.main.bn")
        point_bn = _bn_from(tensors, f"blocks.{i}.point.bn")
        skip_bn = _bn_from(tensors, f"blocks.{i}.skip.bn")
        fused = main_bn is None and point_bn is None and skip_bn is None
        if main.in_channels != c_in:
            raise WeightFormatError(
                f"block {i} expects {c_in} input channels, weights give {main.in_channels}"
            )
        blocks.append(RepBlock(main, main_bn, point, point_bn, skip_bn, fused=fused))
    fused_flags = {b.fused for b in blocks}
    if len(fused_flags) != 1:
        raise WeightFormatError("container mixes fused and unfused blocks")
    try:
        final = ConvSpec(tensors["final.weight"], tensors["final.bias"])
        npm = NpmWeights(
            embed=tensors["npm.embed"],
            proj=ProjectionWeights(m_q=tensors["npm.m_q"], m_k=tensors["npm.m_k"]),
        )
    except KeyError as exc:
        raise WeightFormatError(f"missing tensor {exc} in weight container") from None
    coarse = CoarseModel(blocks=tuple(blocks), final=final, fused=fused_flags.pop())
    return InpaintingModel(coarse=coarse, npm=npm)


def save_model(model: InpaintingModel, path) -> None:
    save_tensors(model_to_tensors(model), path)


def load_model(path) -> InpaintingModel:
    return model_from_tensors(load_tensors(path))


def config_for_model(model: InpaintingModel, lr_size: int = 256,
                     composite: bool = True, seed: int = 0) -> PipelineConfig:
    """Derive patch size and d_k from loaded weight shapes."""
    p2, d_k = model.npm.embed.shape
    patch = int(round((p2 / 3) ** 0.5))
    if 3 * patch * patch != p2:
        raise WeightFormatError(f"embedding rows {p2} are not 3*P^2 for integer P")
    return PipelineConfig(lr_size=lr_size, patch_size=patch, d_k=d_k,
                          composite=composite, seed=seed)


# --- the chain ------------------------------------------------------------------

def _validate_inputs(config: PipelineConfig, image: np.ndarray, mask: np.ndarray):
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected [3, H, W] image, got shape {image.shape}")
    _, h, w = image.shape
    if mask.shape != (1, h, w):
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape}")
    if h % config.lr_size or w % config.lr_size:
        raise ValueError(
            f"image {h}x{w} must be an integer multiple of lr_size {config.lr_size}"
        )
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask values must be binary {0, 1}")


def _sample_coords(n: int, out_n: int):
    # align-corners-false bilinear sample geometry, as in bilinear_resize
    s = (np.arange(out_n, dtype=np.float64) + 0.5) * (n / out_n) - 0.5
    s0 = np.floor(s)
    frac = (s - s0).astype(DTYPE)
    i0 = np.clip(s0.astype(np.int64), 0, n - 1)
    i1 = np.clip(s0.astype(np.int64) + 1, 0, n - 1)
    return i0, i1, frac


def _blur_gather(x: np.ndarray, taps: np.ndarray, axis: int, targets: np.ndarray) -> np.ndarray:
    """Residual-form blur pass evaluated only at `targets` along `axis`."""
    n = x.shape[axis]
    radius = len(taps) // 2
    refl = _reflect_indices(n, radius)
    center = np.take(x, targets, axis=axis)
    acc = np.zeros_like(center)
    c2 = center + center
    for d in range(1, radius + 1):
        kv = taps[radius + d]
        plus = np.take(x, refl[targets + radius + d], axis=axis)
        plus += np.take(x, refl[targets + radius - d], axis=axis)
        plus -= c2
        plus *= kv
        acc += plus
    return center + acc


def _blur_decimate(image: np.ndarray, lr: int) -> np.ndarray:
    """Anti-alias blur followed by bilinear decimation, evaluated sparsely.

    Only blurred values at the bilinear sample neighborhood are computed;
    identical (up to float association) to gaussian_blur + bilinear_resize.
    """
    _, h, w = image.shape
    r_h, r_w = h // lr, w // lr
    taps_y = gaussian_kernel_1d(sigma_for_factor(r_h)).astype(DTYPE)
    taps_x = gaussian_kernel_1d(sigma_for_factor(r_w)).astype(DTYPE)
    y0, y1, fy = _sample_coords(h, lr)
    x0, x1, fx = _sample_coords(w, lr)
    cols = np.concatenate([x0, x1])
    rows = np.concatenate([y0, y1])
    part = _blur_gather(image, taps_x, axis=2, targets=cols)
    grid = _blur_gather(part, taps_y, axis=1, targets=rows)
    v00 = grid[:, :lr, :lr]
    v01 = grid[:, :lr, lr:]
    v10 = grid[:, lr:, :lr]
    v11 = grid[:, lr:, lr:]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return (top + fy[None, :, None] * (bot - top)).astype(DTYPE, copy=False)


def downsample_to_lr(config: PipelineConfig, image: np.ndarray, mask: np.ndarray):
    """Anti-alias blur + bilinear decimation of the image, block-ANY of the mask."""
    _, h, w = image.shape
    lr = config.lr_size
    r_h, r_w = h // lr, w // lr
    if r_h == 1 and r_w == 1:
        return image.copy(), mask.copy()
    x_lr = _blur_decimate(image, lr)
    m_lr = mask[0].reshape(lr, r_h, lr, r_w).max(axis=(1, 3))[None].astype(DTYPE)
    return x_lr, m_lr


def _features_for_grid(config: PipelineConfig, features: np.ndarray) -> np.ndarray:
    grid = config.grid
    if features.shape[1:] == (grid, grid):
        return features
    return bilinear_resize(features, grid, grid)


def run_pipeline_timed(config: PipelineConfig, model: InpaintingModel,
                       image: np.ndarray, mask: np.ndarray):
    """Full inpainting chain returning (result, per-stage wall times in ms)."""
    _validate_inputs(config, image, mask)
    times: dict[str, float] = {}
    t_all = time.perf_counter()

    t0 = time.perf_counter()
    x_lr, m_lr = downsample_to_lr(config, image, mask)
    coarse, features = coarse_forward(model.coarse, x_lr, m_lr)
    features = _features_for_grid(config, features)
    times["coarse"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    x_lr_hat, masked_map = npm_refine(coarse, x_lr, features, model.npm,
                                      m_lr, config.patch_size, config.d_k)
    times["refine"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    out = compose_hr(image, x_lr_hat, masked_map, mask, config.patch_size,
                     composite=config.composite)
    times["upscale"] = (time.perf_counter() - t0) * 1e3
    times["total"] = (time.perf_counter() - t_all) * 1e3
    return out, times


def run_pipeline(config: PipelineConfig, model: InpaintingModel,
                 image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Inpaint a masked HR image; deterministic for fixed (config, model, input)."""
    out, _ = run_pipeline_timed(config, model, image, mask)
    return out
