"""Patch-normalised depth losses at one or several patch scales.

All patch functions operate on the last axis, so they accept a single
flattened patch of shape ``(n,)`` or a stack of patches ``(K, n)``. An
optional 0/1 ``mask`` of the same shape restricts the statistics to valid
pixels; without it every pixel counts.
"""

from __future__ import annotations

import numpy as np

from ..depth import DepthMap, PatchGrid, unfold
from ..tensor import Tensor, as_tensor
from .config import LossConfig


def _counts(x: Tensor, mask) -> np.ndarray:
    if mask is None:
        return np.full(x.shape[:-1] + (1,), float(x.shape[-1]))
    return np.maximum(mask.sum(axis=-1, keepdims=True), 1.0)


def centered(x: Tensor, mask=None) -> Tensor:
    """Subtract each patch's mean; masked pixels come out as exact zeros."""
    if mask is None:
        return x - x.mean(axis=-1, keepdims=True)
    n = _counts(x, mask)
    mu = (x * mask).sum(axis=-1, keepdims=True) / n
    return (x - mu) * mask


def population_std(x: Tensor, mask=None) -> Tensor:
    c = centered(x, mask)
    return ((c * c).sum(axis=-1, keepdims=True) / _counts(x, mask)).sqrt()


def normalize_local(x, eps: float, mask=None) -> Tensor:
    """z-score each patch with its own mean and population std."""
    x = as_tensor(x)
    return centered(x, mask) / (population_std(x, mask) + eps)


def normalize_global(x, sigma_global, eps: float, mask=None) -> Tensor:
    """Centre each patch on its own mean but scale by a map-wide std."""
    x = as_tensor(x)
    return centered(x, mask) / (sigma_global + eps)


def map_std(depth, mask=None) -> Tensor:
    """Population std over the whole (uncropped) map, or its valid pixels."""
    values = depth.values if isinstance(depth, DepthMap) else as_tensor(depth)
    flat = values.reshape(-1)
    m = None if mask is None else np.asarray(mask, dtype=np.float64).reshape(-1)
    return population_std(flat, m).reshape(())


def per_patch_mse(a: Tensor, b: Tensor, mask=None) -> Tensor:
    """Mean over a patch's (valid) elements of the squared difference."""
    d = a - b
    return (d * d).sum(axis=-1) / _counts(a, mask)[..., 0]


def _check_pair(pr: PatchGrid, pp: PatchGrid) -> None:
    if pr.scale != pp.scale or pr.patches.shape != pp.patches.shape:
        raise ValueError(
            f"patch grids differ: scale {pr.scale} vs {pp.scale}, "
            f"shape {pr.patches.shape} vs {pp.patches.shape}"
        )


def kept_patches(mask_grid, scale: int, min_valid_fraction: float) -> np.ndarray:
    """Indices of patches with enough valid pixels to be supervised."""
    frac = mask_grid.sum(axis=-1) / float(scale * scale)
    return np.flatnonzero(frac >= min_valid_fraction)


def _mean_over(values: Tensor, keep) -> Tensor:
    if keep is None:
        return values.mean()
    if keep.size == 0:
        return Tensor(0.0)
    return values[keep].mean()


def loss_local(pr: PatchGrid, pp: PatchGrid, eps: float, mask=None, keep=None) -> Tensor:
    """Average over patches of the per-element MSE between z-scored patches."""
    _check_pair(pr, pp)
    a = normalize_local(pr.patches, eps, mask)
    b = normalize_local(pp.patches, eps, mask)
    return _mean_over(per_patch_mse(a, b, mask), keep)


def loss_global(
    pr: PatchGrid,
    pp: PatchGrid,
    dr,
    dp,
    eps: float,
    mask=None,
    keep=None,
    map_mask=None,
) -> Tensor:
    """Like :func:`loss_local` but every patch is scaled by its map's std."""
    _check_pair(pr, pp)
    a = normalize_global(pr.patches, map_std(dr, map_mask), eps, mask)
    b = normalize_global(pp.patches, map_std(dp, map_mask), eps, mask)
    return _mean_over(per_patch_mse(a, b, mask), keep)


def _values(d) -> Tensor:
    return d.values if isinstance(d, DepthMap) else as_tensor(d)


def _check_maps(dr: Tensor, dp: Tensor) -> None:
    if dr.shape != dp.shape:
        raise ValueError(f"depth maps differ in size: {dr.shape} vs {dp.shape}")


class ScaleTerms:
    """Patch grids and mask bookkeeping shared by every loss at one scale."""

    __slots__ = ("scale", "pr", "pp", "mask", "keep")

    def __init__(self, dr: Tensor, dp: Tensor, scale: int, valid, min_valid_fraction):
        self.scale = scale
        self.pr = unfold(dr, scale)
        self.pp = unfold(dp, scale)
        if valid is None:
            self.mask = None
            self.keep = None
        else:
            self.mask = unfold(valid, scale).patches.data
            self.keep = kept_patches(self.mask, scale, min_valid_fraction)


def scale_terms(dr, dp, cfg: LossConfig, valid=None) -> list[ScaleTerms]:
    dr, dp = _values(dr), _values(dp)
    _check_maps(dr, dp)
    v = None if valid is None else np.asarray(valid, dtype=np.float64)
    return [ScaleTerms(dr, dp, s, v, cfg.min_valid_fraction) for s in cfg.scales]


def hierarchical_loss(dr, dp, cfg: LossConfig, valid=None) -> Tensor:
    """Scale-averaged mix of local and global normalised patch losses."""
    dr_t, dp_t = _values(dr), _values(dp)
    v = None if valid is None else np.asarray(valid, dtype=np.float64)
    wsum = cfg.w_local + cfg.w_global
    total = Tensor(0.0)
    for st in scale_terms(dr_t, dp_t, cfg, v):
        term = Tensor(0.0)
        if cfg.w_local > 0:
            term = term + cfg.w_local * loss_local(st.pr, st.pp, cfg.eps, st.mask, st.keep)
        if cfg.w_global > 0:
            term = term + cfg.w_global * loss_global(
                st.pr, st.pp, dr_t, dp_t, cfg.eps, st.mask, st.keep, v
            )
        total = total + term / wsum
    return total / len(cfg.scales)
