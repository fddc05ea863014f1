"""Pearson-correlation patch loss and its multi-scale cascade."""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor, as_tensor
from .config import LossConfig
from .hierarchical import (
    _mean_over,
    _values,
    centered,
    loss_local,
    scale_terms,
)


def patch_pearson_losses(xr, xp, eps: float, mask=None) -> Tensor:
    """``1 - r`` for every patch along the last axis.

    ``eps`` is added to the product of the two root sums of squares, so a
    constant patch yields a zero numerator and a loss of exactly 1.
    """
    xr, xp = as_tensor(xr), as_tensor(xp)
    if xr.shape != xp.shape:
        raise ValueError(f"patch shapes differ: {xr.shape} vs {xp.shape}")
    if xr.shape[-1] < 2:
        raise ValueError("Pearson loss needs at least 2 values per patch")
    cr = centered(xr, mask)
    cp = centered(xp, mask)
    num = (cr * cp).sum(axis=-1)
    den = (cr * cr).sum(axis=-1).sqrt() * (cp * cp).sum(axis=-1).sqrt() + eps
    return 1.0 - num / den


def pearson_loss(x_r, x_p, eps: float = 1e-8) -> Tensor:
    """Pearson loss for one pair of flattened patches; lies in [0, 2]."""
    x_r, x_p = as_tensor(x_r), as_tensor(x_p)
    if x_r.ndim != 1:
        raise ValueError("pearson_loss takes 1-D patches; use patch_pearson_losses")
    return patch_pearson_losses(x_r, x_p, eps)


def blend(pcc: Tensor, mse: Tensor, cfg: LossConfig) -> Tensor:
    wsum = cfg.w_p + cfg.w_l2
    out = Tensor(0.0)
    if cfg.w_p > 0:
        out = out + cfg.w_p * pcc
    if cfg.w_l2 > 0:
        out = out + cfg.w_l2 * mse
    return out / wsum


def cascade_loss(dr, dp, cfg: LossConfig, valid=None) -> Tensor:
    """Scale average of the Pearson / locally-normalised MSE blend."""
    total = Tensor(0.0)
    for st in scale_terms(dr, dp, cfg, valid):
        pcc = _mean_over(patch_pearson_losses(st.pr.patches, st.pp.patches, cfg.eps, st.mask), st.keep)
        mse = loss_local(st.pr, st.pp, cfg.eps, st.mask, st.keep)
        total = total + blend(pcc, mse, cfg)
    return total / len(cfg.scales)

