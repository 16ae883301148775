"""Quantitative image metrics: mean absolute error, single-scale SSIM with an
11x11 Gaussian window (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2 on unit range) and
PSNR."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def l1(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a.astype(np.float64) - b.astype(np.float64)).mean())


def _ssim_window() -> np.ndarray:
    r = SSIM_WINDOW // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    win = sliding_window_view(img, window.shape)
    return np.einsum("hwst,st->hw", win, window, optimize=True)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM averaged over channels and valid window positions."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 3:
        raise ValueError(f"expected [C, H, W] tensors, got shape {a.shape}")
    _, h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = _ssim_window()
    total = 0.0
    for c in range(a.shape[0]):
        x = a[c].astype(np.float64)
        y = b[c].astype(np.float64)
        mu_x = _filter_valid(x, window)
        mu_y = _filter_valid(y, window)
        var_x = _filter_valid(x * x, window) - mu_x * mu_x
        var_y = _filter_valid(y * y, window) - mu_y * mu_y
        cov = _filter_valid(x * y, window) - mu_x * mu_y
        num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
        total += float((num / den).mean())
    return total / a.shape[0]


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio on unit range; inf for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float((diff * diff).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
