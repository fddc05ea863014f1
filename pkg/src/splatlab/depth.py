"""Depth and colour rasters, the pinhole camera, and patch unfolding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, as_tensor

ORTHO_TOL = 1e-10


class ConfigError(ValueError):
    """A user-supplied parameter is outside its valid range."""


@dataclass
class DepthMap:
    """H x W depth raster. Values stay raw; normalisation belongs to the losses."""

    values: Tensor

    def __post_init__(self):
        self.values = as_tensor(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values.data)):
            raise ValueError("depth map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def numpy(self) -> np.ndarray:
        return self.values.data


@dataclass
class ImageRGB:
    """H x W x 3 colour raster. Clamping to [0, 1] happens only on export."""

    values: Tensor

    def __post_init__(self):
        self.values = as_tensor(self.values)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def numpy(self) -> np.ndarray:
        return self.values.data


@dataclass
class Camera:
    """Pinhole camera with world-to-camera pose ``x_cam = R @ x_world + t``.

    Pixel (row i, col j) has image coordinates (x=j, y=i).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray
    t: np.ndarray
    height: int
    width: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError("focal lengths must be positive")
        if self.height < 1 or self.width < 1:
            raise ConfigError("image extents must be positive")
        if np.abs(self.R @ self.R.T - np.eye(3)).max() > ORTHO_TOL:
            raise ConfigError("camera rotation is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > ORTHO_TOL:
            raise ConfigError("camera rotation must have determinant +1")

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @classmethod
    def look_at(
        cls,
        eye,
        target,
        up=(0.0, 1.0, 0.0),
        *,
        fx: float,
        fy: float | None = None,
        height: int,
        width: int,
        name: str = "",
    ) -> "Camera":
        """Camera at ``eye`` looking at ``target`` (+z forward, +y down in image)."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(-np.asarray(up, dtype=np.float64), forward)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        # re-orthonormalise so the pose check holds to machine precision
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        return cls(
            fx=fx,
            fy=fx if fy is None else fy,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
            R=R,
            t=-R @ eye,
            height=height,
            width=width,
            name=name,
        )


@dataclass
class PatchGrid:
    """Non-overlapping s x s patches, one flattened patch per row."""

    scale: int
    patches: Tensor
    rows: int
    cols: int

    @property
    def count(self) -> int:
        return self.rows * self.cols


def _values(x) -> Tensor:
    if isinstance(x, (DepthMap, ImageRGB)):
        return x.values
    return as_tensor(x)


def unfold(depth, s: int) -> PatchGrid:
    """Split a 2-D map into ``floor(H/s) * floor(W/s)`` patches of ``s*s`` pixels.

    Patches run row-major over the grid and each patch is row-major inside.
    Trailing rows/columns that do not fill a whole patch are dropped.
    """
    values = _values(depth)
    if values.ndim != 2:
        raise ValueError(f"unfold expects a 2-D map, got shape {values.shape}")
    s = int(s)
    h, w = values.shape
    if s < 1:
        raise ConfigError(f"patch scale {s} must be >= 1")
    if s > h or s > w:
        raise ConfigError(f"patch scale {s} exceeds map size {h}x{w}")
    rows, cols = h // s, w // s
    crop = values
    if rows * s != h or cols * s != w:
        crop = values[: rows * s, : cols * s]
    patches = (
        crop.reshape(rows, s, cols, s).transpose(0, 2, 1, 3).reshape(rows * cols, s * s)
    )
    return PatchGrid(scale=s, patches=patches, rows=rows, cols=cols)


def fold(grid: PatchGrid, height: int, width: int) -> DepthMap:
    """Inverse of :func:`unfold` on the covered top-left crop."""
    s = grid.scale
    if height // s != grid.rows or width // s != grid.cols:
        raise ValueError(
            f"grid {grid.rows}x{grid.cols} at scale {s} does not match {height}x{width}"
        )
    if grid.patches.shape != (grid.count, s * s):
        raise ValueError(f"patch tensor has shape {grid.patches.shape}")
    values = (
        grid.patches.reshape(grid.rows, grid.cols, s, s)
        .transpose(0, 2, 1, 3)
        .reshape(grid.rows * s, grid.cols * s)
    )
    return DepthMap(values)
