"""Image and depth quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .depth import DepthMap, ImageRGB
from .tensor import Tensor, as_tensor

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    depth_pearson: float


def _array(x) -> np.ndarray:
    if isinstance(x, (ImageRGB, DepthMap)):
        return x.numpy()
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _tensor(x) -> Tensor:
    if isinstance(x, (ImageRGB, DepthMap)):
        return x.values
    return as_tensor(x)


def psnr(a, b) -> float:
    """10 log10(1 / MSE) in dB for images in [0, 1]; identical images give 100."""
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


@lru_cache(maxsize=32)
def _window_matrix(n: int) -> np.ndarray:
    """(n - 10, n) matrix applying the 1-D Gaussian window at every valid offset."""
    r = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    g = np.exp(-(r**2) / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()
    out = np.zeros((n - SSIM_WINDOW + 1, n))
    for i in range(n - SSIM_WINDOW + 1):
        out[i, i : i + SSIM_WINDOW] = g
    out.setflags(write=False)
    return out


def ssim_map(a, b) -> Tensor:
    """Per-channel SSIM over every fully-inside 11x11 window; shape (C, H-10, W-10)."""
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a.reshape(*a.shape, 1), b.reshape(*b.shape, 1)
    h, w = a.shape[0], a.shape[1]
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    rows, cols = _window_matrix(h), _window_matrix(w).T
    a, b = a.transpose(2, 0, 1), b.transpose(2, 0, 1)

    def blur(x):
        return rows @ x @ cols

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (mu_a * mu_b * 2.0 + SSIM_C1) * (cov * 2.0 + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim_tensor(a, b) -> Tensor:
    """Differentiable mean SSIM (Gaussian window 11, sigma 1.5, valid region)."""
    return ssim_map(a, b).mean()


def ssim(a, b) -> float:
    return float(ssim_tensor(_array(a), _array(b)).data)


def depth_pearson(a, b, mask=None) -> float:
    """Pearson r over the masked pixels; NaN when either side has no variance."""
    a, b = _array(a).reshape(-1), _array(b).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("depth maps differ in size")
    if mask is not None:
        keep = np.asarray(mask, dtype=bool).reshape(-1)
        a, b = a[keep], b[keep]
    if a.size < 2:
        return math.nan
    ca, cb = a - a.mean(), b - b.mean()
    den = math.sqrt(float(ca @ ca) * float(cb @ cb))
    if den == 0.0:
        return math.nan
    return float(ca @ cb) / den


def evaluate(pred: ImageRGB, gt: ImageRGB, pred_depth, gt_depth, mask=None) -> MetricReport:
    return MetricReport(
        psnr=psnr(pred, gt),
        ssim=ssim(pred, gt),
        depth_pearson=depth_pearson(pred_depth, gt_depth, mask),
    )
