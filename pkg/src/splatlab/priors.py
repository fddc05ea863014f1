"""Synthetic sparse-view scenes and simulated monocular depth priors.

Scenes are forward-facing: cameras sit on a short horizontal baseline
looking down +z at content a few metres away, with a textured back wall so
that every pixel has valid depth. Held-out views sit outside the training
baseline, so novel-view quality depends on the geometry that was learned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.spatial import cKDTree

from .depth import Camera, ConfigError, DepthMap, ImageRGB
from .gaussians import GaussianCloud
from .rasterizer import render

RECIPES = ("layered-planes", "random-blobs", "textured-box")
MIN_COVERAGE = 0.9


@dataclass(frozen=True)
class SceneRecipe:
    kind: str = "layered-planes"
    resolution: int = 32
    n_train: int = 3
    n_test: int = 2
    n_planes: int = 3
    n_gaussians: int = 150
    baseline: float = 0.4
    test_spread: float = 2.5
    focal: float = 36.0
    wall_depth: float = 6.0
    wall_grid: int = 10

    def __post_init__(self):
        if self.kind not in RECIPES:
            raise ConfigError(f"scene.kind: unknown recipe {self.kind!r}; expected one of {RECIPES}")
        if self.n_train < 1:
            raise ConfigError("scene.n_train: need at least one training view")
        if self.n_test < 1:
            raise ConfigError("scene.n_test: need at least one held-out view")
        if self.resolution < 11:
            raise ConfigError("scene.resolution: must be >= 11 (SSIM window)")
        if not (self.baseline > 0 and self.test_spread > 0):
            raise ConfigError("scene.baseline and scene.test_spread must be > 0")
        if self.n_planes < 1 or self.n_gaussians < 1 or self.wall_grid < 2:
            raise ConfigError("scene counts must be positive")

    @property
    def n_views(self) -> int:
        return self.n_train + self.n_test


@dataclass
class SyntheticScene:
    cloud: GaussianCloud
    cameras: list[Camera]
    train_ids: list[int]
    test_ids: list[int]
    images: list[ImageRGB]
    depths: list[DepthMap]
    alphas: list[np.ndarray]
    recipe: SceneRecipe = field(default_factory=SceneRecipe)
    seed: int = 0

    @property
    def train_cameras(self) -> list[Camera]:
        return [self.cameras[i] for i in self.train_ids]

    @property
    def test_cameras(self) -> list[Camera]:
        return [self.cameras[i] for i in self.test_ids]

    @property
    def extent(self) -> float:
        centers = np.stack([c.center for c in self.cameras])
        return float(np.linalg.norm(self.cloud.means - centers.mean(axis=0), axis=1).max())


@dataclass(frozen=True)
class PriorModel:
    """Uncalibrated prior: ``a * box_blur_r(D) + b + noise``.

    Noise std is ``sigma_n + sigma_n_rel * std(D)``.
    """

    a: float = 1.0
    b: float = 0.0
    sigma_n: float = 0.0
    radius: int = 0
    sigma_n_rel: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError("prior.a: gain must be > 0")
        if self.sigma_n < 0 or self.sigma_n_rel < 0:
            raise ConfigError("prior noise std must be >= 0")
        if self.radius < 0:
            raise ConfigError("prior.radius: must be >= 0")


def _logit(p):
    return np.log(p / (1.0 - p))


def _texture(rng, uv: np.ndarray) -> np.ndarray:
    """Smooth random colours from a few random sinusoids over 2-D coords."""
    freq = rng.uniform(1.0, 4.0, size=(3, 2, 2))
    phase = rng.uniform(0, 2 * np.pi, size=(3, 2))
    base = rng.uniform(0.25, 0.75, size=3)
    out = np.empty((len(uv), 3))
    for ch in range(3):
        wave = sum(np.sin(uv @ freq[ch, k] + phase[ch, k]) for k in range(2))
        out[:, ch] = base[ch] + 0.2 * wave
    return np.clip(out, 0.02, 0.98)


def _plane(rng, center, half, normal_tilt, n_side, thickness=0.01):
    """A grid of flat Gaussians on a (slightly tilted) rectangle facing -z."""
    s = np.linspace(-1, 1, n_side)
    u, v = np.meshgrid(s, s)
    uv = np.stack([u.ravel(), v.ravel()], axis=1)
    tilt_x, tilt_y = normal_tilt
    pts = np.zeros((len(uv), 3))
    pts[:, 0] = center[0] + half[0] * uv[:, 0]
    pts[:, 1] = center[1] + half[1] * uv[:, 1]
    pts[:, 2] = center[2] + tilt_x * half[0] * uv[:, 0] + tilt_y * half[1] * uv[:, 1]
    # rotate the flat axis to follow the tilt: small rotation about y then x
    ay, ax = math.atan(tilt_x), -math.atan(tilt_y)
    qy = np.array([math.cos(ay / 2), 0.0, math.sin(ay / 2), 0.0])
    qx = np.array([math.cos(ax / 2), math.sin(ax / 2), 0.0, 0.0])
    q = _quat_mul(qx, qy)
    spacing = np.array([2 * half[0] / (n_side - 1), 2 * half[1] / (n_side - 1)])
    scales = np.column_stack(
        [
            np.full(len(uv), 0.6 * spacing[0] / math.cos(ay)),
            np.full(len(uv), 0.6 * spacing[1] / math.cos(ax)),
            np.full(len(uv), thickness),
        ]
    )
    return pts, np.tile(q, (len(uv), 1)), scales, _texture(rng, uv * 2.0)


def _quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def _random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _wall(rng, recipe: SceneRecipe):
    half = recipe.wall_depth * (recipe.resolution / 2 + 4) / recipe.focal + recipe.baseline * max(1.0, recipe.test_spread)
    tilt = tuple(rng.uniform(-0.25, 0.25, size=2))
    return _plane(rng, (0.0, 0.0, recipe.wall_depth), (half, half), tilt, recipe.wall_grid, 0.02)


def _layered_planes(rng, recipe: SceneRecipe):
    parts = [_wall(rng, recipe)]
    depths = np.sort(rng.uniform(2.5, recipe.wall_depth - 1.0, size=recipe.n_planes))
    for z in depths:
        half = rng.uniform(0.3, 0.7, size=2) * z / 4.0
        center = (rng.uniform(-0.6, 0.6) * z / 4.0, rng.uniform(-0.6, 0.6) * z / 4.0, z)
        tilt = tuple(rng.uniform(-0.6, 0.6, size=2))
        parts.append(_plane(rng, center, half, tilt, 5, 0.01))
    return parts


def _random_blobs(rng, recipe: SceneRecipe):
    n = recipe.n_gaussians
    z = rng.uniform(2.5, recipe.wall_depth - 0.8, size=n)
    xy = rng.uniform(-0.8, 0.8, size=(n, 2)) * z[:, None] / 3.0
    pts = np.column_stack([xy, z])
    scales = rng.uniform(0.04, 0.18, size=(n, 3))
    colors = rng.uniform(0.05, 0.95, size=(n, 3))
    return [_wall(rng, recipe), (pts, _random_quats(rng, n), scales, colors)]


def _textured_box(rng, recipe: SceneRecipe):
    parts = [_wall(rng, recipe)]
    c = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(3.2, 4.2)])
    h = rng.uniform(0.5, 0.8)
    # front face plus the two side faces visible from a horizontal baseline
    parts.append(_plane(rng, c - [0, 0, h], (h, h), (0.0, 0.0), 6, 0.01))
    for sign in (-1.0, 1.0):
        n_side = 6
        s = np.linspace(-1, 1, n_side)
        u, v = np.meshgrid(s, s)
        pts = np.column_stack(
            [np.full(u.size, c[0] + sign * h), c[1] + h * v.ravel(), c[2] + h * u.ravel()]
        )
        q = np.array([math.cos(math.pi / 4), 0.0, math.sin(math.pi / 4), 0.0])
        spacing = 2 * h / (n_side - 1)
        scales = np.column_stack(
            [np.full(u.size, 0.6 * spacing), np.full(u.size, 0.6 * spacing), np.full(u.size, 0.01)]
        )
        parts.append((pts, np.tile(q, (u.size, 1)), scales, _texture(rng, np.column_stack([u.ravel(), v.ravel()]))))
    return parts


_BUILDERS = {
    "layered-planes": _layered_planes,
    "random-blobs": _random_blobs,
    "textured-box": _textured_box,
}


def camera_rig(recipe: SceneRecipe) -> tuple[list[Camera], list[int], list[int]]:
    """Training views on a short horizontal baseline, held-out views beyond it.

    Held-out cameras sit at up to ``test_spread`` times the training
    half-baseline and slightly raised, so they extrapolate rather than
    interpolate: their quality depends on the recovered geometry.
    """
    half = recipe.baseline / 2
    train_x = np.linspace(-half, half, recipe.n_train) if recipe.n_train > 1 else np.zeros(1)
    reach = recipe.test_spread * half
    test_x = np.linspace(-reach, reach, recipe.n_test) if recipe.n_test > 1 else np.array([reach])
    eyes = [np.array([x, 0.0, 0.0]) for x in train_x]
    eyes += [np.array([x, 0.3 * reach, 0.0]) for x in test_x]
    look = np.array([0.0, 0.0, recipe.wall_depth])
    cams = [
        Camera.look_at(
            eye,
            look + [eye[0] * 0.5, 0.0, 0.0],
            fx=recipe.focal,
            height=recipe.resolution,
            width=recipe.resolution,
            name=f"view{i}",
        )
        for i, eye in enumerate(eyes)
    ]
    n = recipe.n_train
    return cams, list(range(n)), list(range(n, n + recipe.n_test))


def make_scene(recipe: SceneRecipe, seed: int) -> SyntheticScene:
    """Build a deterministic scene and render its ground-truth views."""
    if not isinstance(recipe, SceneRecipe):
        recipe = SceneRecipe(**recipe)
    rng = np.random.default_rng(seed)
    parts = _BUILDERS[recipe.kind](rng, recipe)
    means = np.concatenate([p[0] for p in parts])
    quats = np.concatenate([p[1] for p in parts])
    scales = np.concatenate([p[2] for p in parts])
    colors = np.concatenate([p[3] for p in parts])
    cloud = GaussianCloud(
        means=means,
        quats=quats,
        log_scales=np.log(scales),
        opacity_logits=np.full(len(means), _logit(0.95)),
        colors=colors,
    )
    cams, train, test = camera_rig(recipe)
    images, depths, alphas = [], [], []
    for cam in cams:
        out = render(cloud, cam)
        images.append(ImageRGB(out.color.numpy().copy()))
        depths.append(DepthMap(out.depth.numpy().copy()))
        alphas.append(out.alpha_acc.data.copy())
    return SyntheticScene(cloud, cams, train, test, images, depths, alphas, recipe, seed)


def coverage(scene: SyntheticScene, threshold: float = 0.5) -> float:
    """Smallest per-view fraction of pixels with accumulated opacity >= threshold."""
    return min(float(np.mean(a >= threshold)) for a in scene.alphas)


def box_blur(values: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2r+1)^2 window, edges replicated."""
    if radius == 0:
        return values.copy()
    return uniform_filter(values, size=2 * radius + 1, mode="nearest")


def simulate_prior(depth, model: PriorModel, seed: int) -> DepthMap:
    """Corrupt a true depth map by gain, offset, blur and Gaussian noise."""
    d = depth.numpy() if isinstance(depth, DepthMap) else np.asarray(depth, dtype=np.float64)
    out = model.a * box_blur(d, model.radius) + model.b
    std = model.sigma_n + model.sigma_n_rel * float(d.std())
    if std > 0:
        out = out + np.random.default_rng(seed).normal(0.0, std, size=d.shape)
    return DepthMap(out)


def _nn_scale(points: np.ndarray) -> np.ndarray:
    """Mean distance to the three nearest neighbours, per point."""
    if len(points) < 2:
        return np.full(len(points), 0.05)
    k = min(4, len(points))
    dist, _ = cKDTree(points).query(points, k=k)
    return np.maximum(dist[:, 1:].mean(axis=1), 1e-3)


def default_cloud(means: np.ndarray, opacity: float = 0.1, color: float = 0.5) -> GaussianCloud:
    """Isotropic grey Gaussians sized by neighbour spacing."""
    n = len(means)
    s = _nn_scale(means)
    return GaussianCloud(
        means=means,
        quats=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        log_scales=np.log(np.column_stack([s, s, s])),
        opacity_logits=np.full(n, _logit(opacity)),
        colors=np.full((n, 3), color),
    )


KEEPABLE = ("quats", "log_scales", "opacity_logits", "colors")


def dense_init(
    scene: SyntheticScene,
    jitter: float,
    drop_fraction: float,
    seed: int,
    keep: tuple[str, ...] = (),
) -> GaussianCloud:
    """Stand-in for a dense multi-view point cloud: jittered, thinned GT centres.

    Attributes listed in ``keep`` are copied from the ground truth; all
    others are reset to :func:`default_cloud` values.
    """
    if not 0 <= drop_fraction < 1:
        raise ConfigError("init.drop_fraction: must lie in [0, 1)")
    unknown = set(keep) - set(KEEPABLE)
    if unknown:
        raise ConfigError(f"init.keep: unknown attributes {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    gt = scene.cloud
    n = len(gt)
    n_keep = math.ceil(round((1.0 - drop_fraction) * n, 9))
    idx = np.sort(rng.permutation(n)[:n_keep])
    means = gt.means[idx] + rng.normal(0.0, jitter, size=(n_keep, 3)) if jitter > 0 else gt.means[idx].copy()
    cloud = default_cloud(means)
    for name in keep:
        setattr(cloud, name, getattr(gt, name)[idx].copy())
    return cloud


def visible_counts(scene: SyntheticScene, points: np.ndarray, tol: float = 0.05) -> np.ndarray:
    """Number of training views in which each point is in frame and unoccluded."""
    counts = np.zeros(len(points), dtype=np.int64)
    for i in scene.train_ids:
        cam, depth = scene.cameras[i], scene.depths[i].numpy()
        pc = points @ cam.R.T + cam.t
        z = pc[:, 2]
        front = z > 1e-6
        u = np.full(len(points), -1)
        v = np.full(len(points), -1)
        u[front] = np.round(cam.fx * pc[front, 0] / z[front] + cam.cx).astype(int)
        v[front] = np.round(cam.fy * pc[front, 1] / z[front] + cam.cy).astype(int)
        inside = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
        seen = np.zeros(len(points), dtype=bool)
        d = depth[v[inside], u[inside]]
        seen[inside] = np.abs(z[inside] - d) <= tol * d
        counts += seen
    return counts


def sparse_init(
    scene: SyntheticScene,
    jitter: float,
    seed: int,
    min_views: int = 2,
) -> GaussianCloud:
    """Stand-in for sparse SfM: only centres seen in >= ``min_views`` training views."""
    rng = np.random.default_rng(seed)
    gt = scene.cloud
    seen = visible_counts(scene, gt.means) >= min_views
    idx = np.flatnonzero(seen)
    if len(idx) == 0:
        raise ConfigError("sparse init found no point visible in enough training views")
    means = gt.means[idx] + rng.normal(0.0, jitter, size=(len(idx), 3))
    return default_cloud(means)
