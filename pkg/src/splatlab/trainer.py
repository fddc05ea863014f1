"""Optimisation of a Gaussian cloud against sparse views and depth priors."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import dataclasses
from dataclasses import asdict, dataclass, field

import numpy as np

from .depth import ConfigError, DepthMap, ImageRGB
from .gaussians import FIELDS, GaussianCloud
from .losses import LossConfig, depth_loss
from .metrics import depth_pearson, psnr, ssim, ssim_tensor
from .priors import SyntheticScene
from .rasterizer import DEPTH_MODES, RenderOutput, render
from .tensor import Tensor

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "label",
    "scene_seed",
    "iteration",
    "loss_total",
    "loss_l1",
    "loss_ssim",
    "loss_depth",
    "psnr",
    "ssim",
    "depth_pearson",
)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, component: str):
        super().__init__(f"loss component {component!r} became non-finite at iteration {iteration}")
        self.iteration = iteration
        self.component = component


@dataclass(frozen=True)
class LearningRates:
    means: float = 1.6e-4  # multiplied by the scene extent
    quats: float = 1e-3
    log_scales: float = 5e-3
    opacity_logits: float = 5e-2
    colors: float = 2.5e-3

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ConfigError(f"train.lr.{name}: must be > 0")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    lr: LearningRates = field(default_factory=LearningRates)
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    loss: LossConfig = field(default_factory=LossConfig)
    eval_every: int = 500
    seed: int = 0
    depth_mode: str = "normalized"
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("train.iterations: must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("train.eval_every: must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("train.beta1/beta2: must lie in [0, 1)")
        if not self.eps_opt > 0:
            raise ConfigError("train.eps_opt: must be > 0")
        if self.depth_mode not in DEPTH_MODES:
            raise ConfigError(f"train.depth_mode: must be one of {DEPTH_MODES}")


@dataclass
class LossBreakdown:
    total: Tensor
    l1: float
    ssim: float
    depth: float

    def components(self) -> dict[str, float]:
        return {"loss_l1": self.l1, "loss_ssim": self.ssim, "loss_depth": self.depth}


def depth_valid_mask(out: RenderOutput, threshold: float) -> np.ndarray:
    return (out.alpha_acc.data >= threshold).astype(np.float64)


def total_loss(out: RenderOutput, gt_image, prior, cfg: LossConfig) -> LossBreakdown:
    """Photometric L1 + D-SSIM, plus the weighted depth term on opaque pixels.

    Breakdown entries are the already-weighted terms, so they add up to the
    total.
    """
    color = out.color.values
    gt = gt_image.values if isinstance(gt_image, ImageRGB) else Tensor(gt_image)
    if color.shape != gt.shape:
        raise ValueError(f"render {color.shape} and target {gt.shape} differ")
    l1 = (color - gt).abs().mean() * (1.0 - cfg.lambda_ssim)
    terms = [l1]
    dssim = Tensor(0.0)
    if cfg.lambda_ssim > 0:
        dssim = (1.0 - ssim_tensor(color, gt)) * (0.5 * cfg.lambda_ssim)
        terms.append(dssim)
    depth = Tensor(0.0)
    if prior is not None and cfg.lambda_depth > 0 and (cfg.enable_hd or cfg.enable_pc):
        pd = prior if isinstance(prior, DepthMap) else DepthMap(prior)
        if pd.values.shape != out.depth.values.shape:
            raise ValueError("prior and rendered depth differ in size")
        valid = depth_valid_mask(out, cfg.alpha_threshold)
        depth = depth_loss(out.depth, pd, cfg, valid=valid) * cfg.lambda_depth
        terms.append(depth)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return LossBreakdown(total, l1.item(), dssim.item(), depth.item())


class Adam:
    """Adam with one learning rate per named parameter array; updates in place."""

    def __init__(self, params: dict[str, np.ndarray], lrs: dict[str, float], beta1, beta2, eps):
        self.params = params
        self.lrs = lrs
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lrs[k] * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EvalRow:
    iteration: int
    loss_total: float
    loss_l1: float
    loss_ssim: float
    loss_depth: float
    psnr: float
    ssim: float
    depth_pearson: float


@dataclass
class TrainReport:
    rows: list[EvalRow] = field(default_factory=list)
    checkpoint: str | None = None
    scene_seed: int | None = None
    label: str = ""

    @property
    def final(self) -> EvalRow:
        return self.rows[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [self.label, self.scene_seed] + [_fmt(getattr(row, c)) for c in REPORT_COLUMNS[2:]]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "label": self.label,
            "scene_seed": self.scene_seed,
            "checkpoint": self.checkpoint,
            "final": dataclasses.asdict(self.final),
        }

    def to_json(self) -> str:
        return json.dumps(_finite(self.summary()), indent=2, sort_keys=True) + "\n"


def _fmt(x) -> str:
    if isinstance(x, int):
        return str(x)
    return "nan" if math.isnan(x) else repr(float(x))


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def evaluate_views(cloud: GaussianCloud, scene: SyntheticScene, cfg: TrainConfig, ids=None):
    """Mean PSNR, SSIM and depth Pearson over the held-out views."""
    ids = scene.test_ids if ids is None else ids
    ps, ss, dp = [], [], []
    for i in ids:
        out = render(cloud, scene.cameras[i], background=cfg.background, depth_mode=cfg.depth_mode)
        img = np.clip(out.color.numpy(), 0.0, 1.0)
        ps.append(psnr(img, scene.images[i]))
        ss.append(ssim(img, scene.images[i]))
        mask = (out.alpha_acc.data >= cfg.loss.alpha_threshold) & (scene.alphas[i] >= 0.5)
        dp.append(depth_pearson(out.depth.numpy(), scene.depths[i], mask))
    return float(np.mean(ps)), float(np.mean(ss)), float(np.mean(dp))


def train(
    scene: SyntheticScene,
    init: GaussianCloud,
    cfg: TrainConfig,
    priors: dict[int, DepthMap] | None = None,
    checkpoint_path=None,
    label: str = "",
) -> tuple[GaussianCloud, TrainReport]:
    """Fit ``init`` to the scene's training views, one view per step round-robin."""
    if not scene.train_ids or not scene.test_ids:
        raise ConfigError("training needs at least one train and one held-out view")
    priors = priors or {}
    cloud = init.copy()
    cloud.normalize_quats()
    lrs = {
        "means": cfg.lr.means * max(scene.extent, 1e-6),
        "quats": cfg.lr.quats,
        "log_scales": cfg.lr.log_scales,
        "opacity_logits": cfg.lr.opacity_logits,
        "colors": cfg.lr.colors,
    }
    params = {f: getattr(cloud, f) for f in FIELDS}
    opt = Adam(params, lrs, cfg.beta1, cfg.beta2, cfg.eps_opt)
    report = TrainReport(scene_seed=scene.seed, label=label)

    for it in range(1, cfg.iterations + 1):
        view = scene.train_ids[(it - 1) % len(scene.train_ids)]
        leaves = cloud.leaves()
        out = render(leaves, scene.cameras[view], background=cfg.background, depth_mode=cfg.depth_mode)
        parts = total_loss(out, scene.images[view], priors.get(view), cfg.loss)
        for name, value in (("total", parts.total.item()), *parts.components().items()):
            if not math.isfinite(value):
                raise TrainingDiverged(it, name)
        parts.total.backward()
        grads = {f: getattr(leaves, f).grad for f in FIELDS}
        for name, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                raise TrainingDiverged(it, f"grad:{name}")
        opt.step(grads)
        cloud.normalize_quats()

        if it % cfg.eval_every == 0 or it == cfg.iterations:
            p, s, d = evaluate_views(cloud, scene, cfg)
            report.rows.append(
                EvalRow(it, parts.total.item(), parts.l1, parts.ssim, parts.depth, p, s, d)
            )
            log.info("%s it=%d loss=%.5f psnr=%.2f depth_r=%.4f", label, it, parts.total.item(), p, d)

    if checkpoint_path is not None:
        cloud.save(checkpoint_path)
        report.checkpoint = str(checkpoint_path)
    return cloud, report
