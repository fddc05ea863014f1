"""Gaussian scene parameters, 3-D covariance, and perspective projection."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .depth import Camera
from .tensor import Tensor, as_tensor, stack

LOW_PASS = 0.3  # px^2 added to the projected covariance diagonal
Z_NEAR = 0.01
SH_C1 = 0.4886025119029199

CHECKPOINT_MAGIC = b"SPLT"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIQI")
FIELDS = ("means", "quats", "log_scales", "opacity_logits", "colors")


def color_width(sh_degree: int) -> int:
    if sh_degree not in (0, 1):
        raise ValueError(f"SH degree must be 0 or 1, got {sh_degree}")
    return 3 * (sh_degree + 1) ** 2


@dataclass
class GaussianCloud:
    """Optimisable scene, one row per Gaussian.

    scale = exp(log_scales), opacity = sigmoid(opacity_logits). ``colors``
    holds an RGB base colour, followed for SH degree 1 by three RGB
    coefficients of the first-order band.
    """

    means: np.ndarray
    quats: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    sh_degree: int = 0

    def __post_init__(self):
        n = len(self.means)
        cw = color_width(self.sh_degree)
        shapes = {
            "means": (n, 3),
            "quats": (n, 4),
            "log_scales": (n, 3),
            "opacity_logits": (n,),
            "colors": (n, cw),
        }
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(shape)
            setattr(self, name, arr)
        if np.any(np.linalg.norm(self.quats, axis=1) == 0):
            raise ValueError("quaternions must be nonzero")

    def __len__(self) -> int:
        return len(self.means)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    @property
    def opacities(self) -> np.ndarray:
        return 0.5 * (1.0 + np.tanh(0.5 * self.opacity_logits))

    def normalize_quats(self) -> None:
        self.quats /= np.linalg.norm(self.quats, axis=1, keepdims=True)

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(*(getattr(self, f).copy() for f in FIELDS), self.sh_degree)

    def subset(self, index) -> "GaussianCloud":
        return GaussianCloud(*(getattr(self, f)[index] for f in FIELDS), self.sh_degree)

    def leaves(self) -> "CloudParams":
        """Fresh gradient-tracking tensors for one forward/backward pass."""
        return CloudParams(
            *(Tensor(getattr(self, f).copy(), requires_grad=True) for f in FIELDS),
            sh_degree=self.sh_degree,
        )

    # -- checkpoint -----------------------------------------------------------
    def to_bytes(self) -> bytes:
        records = np.concatenate(
            [self.means, self.quats, self.log_scales, self.opacity_logits[:, None], self.colors],
            axis=1,
        )
        header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(self), self.sh_degree)
        return header + records.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GaussianCloud":
        if len(blob) < _HEADER.size:
            raise ValueError("checkpoint truncated")
        magic, version, count, degree = _HEADER.unpack_from(blob)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a Gaussian cloud checkpoint")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        width = 3 + 4 + 3 + 1 + color_width(degree)
        expected = _HEADER.size + 8 * width * count
        if len(blob) != expected:
            raise ValueError(f"checkpoint has {len(blob)} bytes, expected {expected}")
        rec = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(count, width)
        rec = rec.astype(np.float64)
        return cls(rec[:, 0:3], rec[:, 3:7], rec[:, 7:10], rec[:, 10], rec[:, 11:], degree)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "GaussianCloud":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class CloudParams:
    """Tensor view of a :class:`GaussianCloud` used inside the graph."""

    means: Tensor
    quats: Tensor
    log_scales: Tensor
    opacity_logits: Tensor
    colors: Tensor
    sh_degree: int = 0

    def tensors(self) -> dict[str, Tensor]:
        return {f: getattr(self, f) for f in FIELDS}


@dataclass
class Projected2D:
    """Screen-space footprint of the Gaussians that survived near-plane culling."""

    index: np.ndarray  # rows of the cloud, in the order below
    means2d: Tensor  # (M, 2) pixels
    cov2d: Tensor  # (M, 2, 2) pixels^2, low-pass floor included
    depth: Tensor  # (M,) camera-space z
    cam_points: Tensor  # (M, 3)


def rotation_matrices(quats) -> Tensor:
    """(N, 3, 3) rotations from (w, x, y, z) quaternions, normalised on the fly."""
    q = as_tensor(quats)
    q = q / (q * q).sum(axis=1, keepdims=True).sqrt()
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    rows = [
        1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),
        2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
        2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy),
    ]  # fmt: skip
    return stack(rows, axis=1).reshape(-1, 3, 3)


def covariance(quats, log_scales) -> Tensor:
    """R diag(exp(2 log_scales)) R^T, symmetrised. Accepts one or many Gaussians."""
    q, ls = as_tensor(quats), as_tensor(log_scales)
    single = q.ndim == 1
    if single:
        q, ls = q.reshape(1, 4), ls.reshape(1, 3)
    R = rotation_matrices(q)
    var = (ls * 2.0).exp()
    cov = (R * var.reshape(-1, 1, 3)) @ R.swapaxes(1, 2)
    cov = (cov + cov.swapaxes(1, 2)) * 0.5
    return cov.reshape(3, 3) if single else cov


def visible(means, cam: Camera, z_near: float = Z_NEAR) -> np.ndarray:
    """Indices of Gaussians in front of the near plane."""
    m = np.asarray(means.data if isinstance(means, Tensor) else means, dtype=np.float64)
    z = m @ cam.R[2] + cam.t[2]
    return np.flatnonzero(z > z_near)


def project(
    means,
    quats,
    log_scales,
    cam: Camera,
    *,
    R=None,
    t=None,
    z_near: float = Z_NEAR,
    low_pass: float = LOW_PASS,
) -> Projected2D:
    """Project Gaussians to the image plane with the local affine (EWA) model.

    ``R`` and ``t`` default to the camera pose; pass tensors to differentiate
    with respect to it. Gaussians at or behind ``z_near`` are dropped.
    """
    means, quats, log_scales = as_tensor(means), as_tensor(quats), as_tensor(log_scales)
    if means.ndim == 1:
        means, quats, log_scales = means.reshape(1, 3), quats.reshape(1, 4), log_scales.reshape(1, 3)
    Rw = as_tensor(cam.R if R is None else R)
    tw = as_tensor(cam.t if t is None else t)

    z_all = means.data @ Rw.data[2] + tw.data[2]
    idx = np.flatnonzero(z_all > z_near)
    if len(idx) < len(means):
        means, quats, log_scales = means[idx], quats[idx], log_scales[idx]

    pc = means @ Rw.T + tw
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    inv_z = 1.0 / z
    u = cam.fx * x * inv_z + cam.cx
    v = cam.fy * y * inv_z + cam.cy
    means2d = stack([u, v], axis=1)

    zero = Tensor(np.zeros(len(idx)))
    inv_z2 = inv_z * inv_z
    J = stack(
        [cam.fx * inv_z, zero, -cam.fx * x * inv_z2, zero, cam.fy * inv_z, -cam.fy * y * inv_z2],
        axis=1,
    ).reshape(-1, 2, 3)
    T = J @ Rw
    cov3 = covariance(quats, log_scales)
    cov2 = T @ cov3 @ T.swapaxes(1, 2)
    cov2 = (cov2 + cov2.swapaxes(1, 2)) * 0.5 + low_pass * np.eye(2)
    return Projected2D(index=idx, means2d=means2d, cov2d=cov2, depth=z, cam_points=pc)
