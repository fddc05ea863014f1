"""The depth term of the training objective, assembled from the patch losses."""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor
from .cascade import blend, cascade_loss, patch_pearson_losses
from .config import LossConfig
from .hierarchical import (
    _check_maps,
    _mean_over,
    _values,
    hierarchical_loss,
    loss_global,
    loss_local,
    scale_terms,
)


def _blended(dr, dp, cfg: LossConfig, valid) -> Tensor:
    dr_t, dp_t = _values(dr), _values(dp)
    v = None if valid is None else np.asarray(valid, dtype=np.float64)
    wsum = cfg.w_local + cfg.w_global
    total = Tensor(0.0)
    for st in scale_terms(dr_t, dp_t, cfg, v):
        pcc = _mean_over(
            patch_pearson_losses(st.pr.patches, st.pp.patches, cfg.eps, st.mask), st.keep
        )
        term = Tensor(0.0)
        if cfg.w_local > 0:
            local = loss_local(st.pr, st.pp, cfg.eps, st.mask, st.keep)
            term = term + cfg.w_local * blend(pcc, local, cfg)
        if cfg.w_global > 0:
            glob = loss_global(st.pr, st.pp, dr_t, dp_t, cfg.eps, st.mask, st.keep, v)
            term = term + cfg.w_global * blend(pcc, glob, cfg)
        total = total + term / wsum
    return total / len(cfg.scales)


def depth_loss(dr, dp, cfg: LossConfig, valid=None) -> Tensor:
    """Scale-invariant depth supervision selected by ``cfg``.

    ======================  ==================================================
    enable_hd, enable_pc    objective
    ======================  ==================================================
    off, off                0
    on, off                 multi-scale local/global normalised MSE
    off, on                 cascade Pearson loss
    on, on (blended)        per scale, each normalised term mixed with Pearson
    on, on (separate)       normalised MSE objective + cascade Pearson loss
    ======================  ==================================================

    ``valid`` is an optional H x W 0/1 mask of pixels to supervise.
    """
    _check_maps(_values(dr), _values(dp))
    if cfg.enable_hd and cfg.enable_pc:
        if cfg.objective == "separate":
            return hierarchical_loss(dr, dp, cfg, valid) + cascade_loss(dr, dp, cfg, valid)
        return _blended(dr, dp, cfg, valid)
    if cfg.enable_hd:
        return hierarchical_loss(dr, dp, cfg, valid)
    if cfg.enable_pc:
        return cascade_loss(dr, dp, cfg, valid)
    return Tensor(0.0)
