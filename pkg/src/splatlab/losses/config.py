"""Weights and switches for the depth objectives."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..depth import ConfigError

OBJECTIVES = ("blended", "separate")


@dataclass(frozen=True)
class LossConfig:
    """Depth-supervision settings.

    ``w_local``/``w_global`` and ``w_p``/``w_l2`` act as mixing ratios: each
    pair is divided by its sum, so the defaults reproduce the plain weighted
    sums and a zeroed weight switches its term off cleanly.

    objective:
        ``"blended"`` folds the Pearson term into the local and global
        normalised terms at every scale; ``"separate"`` adds the
        multi-scale normalised loss and the cascade Pearson loss as two
        objectives.
    """

    scales: tuple[int, ...] = (4, 8, 16)
    w_local: float = 0.5
    w_global: float = 0.5
    w_p: float = 0.1
    w_l2: float = 0.9
    eps: float = 1e-8
    lambda_depth: float = 0.05
    lambda_ssim: float = 0.2
    enable_hd: bool = True
    enable_pc: bool = True
    objective: str = "blended"
    alpha_threshold: float = 0.5
    min_valid_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        if not self.scales:
            raise ConfigError("scales: must be non-empty")
        if any(s < 1 for s in self.scales):
            raise ConfigError("scales: every patch size must be >= 1")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ConfigError("scales: must be strictly increasing")
        for name in ("w_local", "w_global", "w_p", "w_l2", "lambda_depth", "lambda_ssim"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0")
        if self.w_local + self.w_global <= 0:
            raise ConfigError("w_local + w_global must be positive")
        if self.w_p + self.w_l2 <= 0:
            raise ConfigError("w_p + w_l2 must be positive")
        if not self.eps > 0:
            raise ConfigError("eps: must be > 0")
        if self.lambda_ssim > 1:
            raise ConfigError("lambda_ssim: must be <= 1")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective: must be one of {OBJECTIVES}")
        if not 0 <= self.alpha_threshold <= 1:
            raise ConfigError("alpha_threshold: must lie in [0, 1]")
        if not 0 <= self.min_valid_fraction <= 1:
            raise ConfigError("min_valid_fraction: must lie in [0, 1]")

    def replace(self, **changes) -> "LossConfig":
        return dataclasses.replace(self, **changes)
