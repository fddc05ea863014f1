"""Scale-invariant depth losses: patch normalisation, Pearson cascade, objective."""

from .cascade import cascade_loss, patch_pearson_losses, pearson_loss
from .config import LossConfig
from .hierarchical import (
    hierarchical_loss,
    loss_global,
    loss_local,
    map_std,
    normalize_global,
    normalize_local,
)
from .objective import depth_loss

__all__ = [
    "LossConfig",
    "cascade_loss",
    "depth_loss",
    "hierarchical_loss",
    "loss_global",
    "loss_local",
    "map_std",
    "normalize_global",
    "normalize_local",
    "patch_pearson_losses",
    "pearson_loss",
]
