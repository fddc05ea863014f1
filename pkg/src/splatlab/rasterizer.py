"""Differentiable splatting of Gaussians into colour, depth and opacity maps.

Gaussians are sorted once per frame by camera depth and composited front to
back at every pixel. A (pixel, Gaussian) pair contributes only when its 2-D
response reaches 1/255 and the pixel's transmittance has not yet dropped
below 1e-4; each pixel walks only its own list of such pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth import Camera, DepthMap, ImageRGB
from .gaussians import LOW_PASS, SH_C1, Z_NEAR, CloudParams, GaussianCloud, project
from .tensor import Tensor, cumsum, maximum, minimum, stack, where

MIN_RESPONSE = 1.0 / 255.0
MAX_ALPHA = 0.99
MIN_TRANSMITTANCE = 1e-4
DEPTH_EPS = 1e-6
DEPTH_MODES = ("normalized", "raw")


@dataclass
class RenderOutput:
    color: ImageRGB
    depth: DepthMap
    alpha_acc: Tensor  # (H, W) accumulated composite weight
    transmittance: Tensor  # (H, W) light left after the last contribution
    n_visible: int = 0


def _pixel_grid_for(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.reshape(-1).astype(np.float64), ys.reshape(-1).astype(np.float64)


def _pixel_grid(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    return _pixel_grid_for(cam.height, cam.width)


def _params(cloud) -> CloudParams:
    if isinstance(cloud, CloudParams):
        return cloud
    if isinstance(cloud, GaussianCloud):
        return CloudParams(
            Tensor(cloud.means),
            Tensor(cloud.quats),
            Tensor(cloud.log_scales),
            Tensor(cloud.opacity_logits),
            Tensor(cloud.colors),
            sh_degree=cloud.sh_degree,
        )
    raise TypeError(f"cannot render {type(cloud).__name__}")


def view_colors(colors: Tensor, means: Tensor, cam: Camera, sh_degree: int) -> Tensor:
    """RGB per Gaussian as seen from ``cam``."""
    if sh_degree == 0:
        return colors
    d = means - cam.center
    d = d / (d * d).sum(axis=1, keepdims=True).sqrt()
    x, y, z = d[:, 0:1], d[:, 1:2], d[:, 2:3]
    return colors[:, 0:3] + SH_C1 * (
        -y * colors[:, 3:6] + z * colors[:, 6:9] - x * colors[:, 9:12]
    )


def _gates(alpha_raw: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Pairs that contribute: strong enough response, before early termination."""
    live = response >= MIN_RESPONSE
    a_gate = np.where(live, np.minimum(alpha_raw, MAX_ALPHA), 0.0)
    t_after = np.cumsum(np.log1p(-a_gate), axis=1)
    return live & (t_after >= np.log(MIN_TRANSMITTANCE))


def _composite_reference(mu, conic, opacity, rgb, z, px, py):
    dx = px[:, None] - mu[:, 0].reshape(1, -1)
    dy = py[:, None] - mu[:, 1].reshape(1, -1)
    con_a, con_b, con_c = conic[:, 0], conic[:, 1], conic[:, 2]
    power = (con_a * dx * dx + con_c * dy * dy) * -0.5 + con_b * dx * dy
    response = power.exp()
    alpha_raw = opacity.reshape(1, -1) * response
    live = _gates(alpha_raw.data, response.data)
    alpha = where(live, minimum(alpha_raw, MAX_ALPHA), 0.0)
    log_keep = (1.0 - alpha).log()
    log_t = cumsum(log_keep, axis=1)
    weights = alpha * (log_t - log_keep).exp()
    color = weights @ rgb
    depth_sum = (weights @ z.reshape(-1, 1)).reshape(-1)
    return color, depth_sum, weights.sum(axis=1), log_t[:, -1].exp()


def _response(A, B, C, dx, dy):
    return np.exp(-0.5 * (A * dx * dx + C * dy * dy) + B * dx * dy)


@dataclass
class PairLists:
    """Contributing (pixel, splat) pairs, pixel-major and depth-ordered within a pixel.

    ``slot`` is each pair's position in its pixel's list; ``width`` is the
    longest list, so ``(pix, slot)`` addresses a dense (P, width) layout used
    for the per-pixel prefix sums. ``dx``, ``dy`` and ``response`` are the
    pixel offsets from the splat centre and the splat's response there.
    """

    pix: np.ndarray
    gid: np.ndarray
    slot: np.ndarray
    counts: np.ndarray
    width: int
    dx: np.ndarray
    dy: np.ndarray
    response: np.ndarray

    def padded(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros((len(self.counts), self.width))
        out[self.pix, self.slot] = values
        return out

    def gather(self, dense: np.ndarray) -> np.ndarray:
        return dense[self.pix, self.slot]


def candidate_lists(conic: np.ndarray, mu: np.ndarray, height: int, width: int) -> PairLists:
    """Per-pixel lists of the splats whose response reaches ``MIN_RESPONSE``.

    Pairs are enumerated over the bounding box of each splat's 1/255
    response contour and then filtered on the response itself, so every
    contributing pair is kept and nothing else. Input order (depth order)
    is preserved within each pixel.
    """
    n = len(mu)
    n_pix = height * width
    A, B, C = conic[:, 0], conic[:, 1], conic[:, 2]
    lam_min = 0.5 * (A + C) - np.sqrt(0.25 * (A - C) ** 2 + B * B)
    radius = np.sqrt(-2.0 * np.log(MIN_RESPONSE) / np.maximum(lam_min, 1e-300))
    x0 = np.maximum(np.ceil(mu[:, 0] - radius), 0).astype(np.int64)
    x1 = np.minimum(np.floor(mu[:, 0] + radius), width - 1).astype(np.int64)
    y0 = np.maximum(np.ceil(mu[:, 1] - radius), 0).astype(np.int64)
    y1 = np.minimum(np.floor(mu[:, 1] + radius), height - 1).astype(np.int64)
    nx = np.maximum(x1 - x0 + 1, 0)
    ny = np.maximum(y1 - y0 + 1, 0)
    area = nx * ny
    gid = np.repeat(np.arange(n), area)
    off = np.arange(len(gid)) - np.repeat(np.cumsum(area) - area, area)
    row, col = np.divmod(off, np.repeat(nx, area))
    row += np.repeat(y0, area)
    col += np.repeat(x0, area)
    dx = col - mu[gid, 0]
    dy = row - mu[gid, 1]
    response = _response(A[gid], B[gid], C[gid], dx, dy)
    hit = np.flatnonzero(response >= MIN_RESPONSE)
    pix = row[hit] * width + col[hit]
    # stable sort keeps depth order inside a pixel; small keys take the radix path
    key = pix.astype(np.uint16) if n_pix <= 1 << 16 else pix
    order = hit[np.argsort(key, kind="stable")]
    pix = row[order] * width + col[order]
    counts = np.bincount(pix, minlength=n_pix)
    starts = np.cumsum(counts) - counts
    slot = np.arange(len(pix)) - starts[pix]
    return PairLists(
        pix=pix,
        gid=gid[order],
        slot=slot,
        counts=counts,
        width=max(int(counts.max(initial=0)), 1),
        dx=dx[order],
        dy=dy[order],
        response=response[order],
    )


def composite(mu, conic, opacity, rgb, z, height: int, width: int) -> Tensor:
    """Front-to-back compositing of depth-sorted splats as a single tape node.

    Returns a (P, 6) tensor of [r, g, b, weighted depth sum, accumulated
    weight, final transmittance] per pixel, P = height * width. ``conic``
    rows are (A, B, C) with exponent ``-(A dx^2 + C dy^2)/2 + B dx dy``.
    """
    n = len(mu.data)
    n_pix = height * width
    lists = candidate_lists(conic.data, mu.data, height, width)
    pix, gid = lists.pix, lists.gid
    dx, dy, response = lists.dx, lists.dy, lists.response
    alpha_raw = opacity.data[gid] * response

    # a pair is dropped once the transmittance after it falls below the floor;
    # that cuts a suffix of each list, so the kept prefix shares its log T
    clipped = np.minimum(alpha_raw, MAX_ALPHA)
    log_keep = np.log1p(-clipped)
    log_t = lists.gather(np.cumsum(lists.padded(log_keep), axis=1))
    live = log_t >= np.log(MIN_TRANSMITTANCE)
    alpha = np.where(live, clipped, 0.0)
    log_keep = np.where(live, log_keep, 0.0)
    log_t = np.where(live, log_t, 0.0)
    t_before = np.exp(log_t - log_keep)
    weights = alpha * t_before
    t_final = np.exp(lists.padded(log_t).min(axis=1))

    pair_rgb = rgb.data[gid]
    zs = z.data[gid]
    out = np.empty((n_pix, 6))
    for k in range(3):
        out[:, k] = np.bincount(pix, weights * pair_rgb[:, k], minlength=n_pix)
    out[:, 3] = np.bincount(pix, weights * zs, minlength=n_pix)
    out[:, 4] = np.bincount(pix, weights, minlength=n_pix)
    out[:, 5] = t_final
    slope = live & (alpha_raw <= MAX_ALPHA)

    def vjp(g):
        g_rgb, g_d, g_a, g_t = g[:, 0:3], g[:, 3], g[:, 4], g[:, 5]
        feat = (g_rgb[pix] * pair_rgb).sum(axis=1) + g_d[pix] * zs + g_a[pix]
        wf = weights * feat
        # sum over later splats k > i of w_k f_k, plus the final-transmittance term
        suffix = np.cumsum(lists.padded(wf)[:, ::-1], axis=1)[:, ::-1]
        later = lists.gather(suffix) - wf + (g_t * t_final)[pix]
        d_alpha = np.where(slope, t_before * feat - later / (1.0 - alpha), 0.0)
        d_power = d_alpha * alpha_raw
        A, B, C = (conic.data[gid, k] for k in range(3))
        pw_dx, pw_dy = d_power * dx, d_power * dy

        def scatter(*values):
            cols = [np.bincount(gid, v, minlength=n) for v in values]
            return cols[0] if len(cols) == 1 else np.stack(cols, axis=1)

        return (
            scatter(A * pw_dx - B * pw_dy, C * pw_dy - B * pw_dx),
            scatter(-0.5 * pw_dx * dx, pw_dx * dy, -0.5 * pw_dy * dy),
            scatter(d_alpha * response),
            scatter(*(weights * g_rgb[pix, k] for k in range(3))),
            scatter(weights * g_d[pix]),
        )

    return Tensor._make(out, (mu, conic, opacity, rgb, z), vjp, "composite")


def _empty(cam: Camera, background: np.ndarray) -> RenderOutput:
    h, w = cam.height, cam.width
    return RenderOutput(
        color=ImageRGB(np.broadcast_to(background, (h, w, 3)).copy()),
        depth=DepthMap(np.zeros((h, w))),
        alpha_acc=Tensor(np.zeros((h, w))),
        transmittance=Tensor(np.ones((h, w))),
        n_visible=0,
    )


def render(
    cloud,
    cam: Camera,
    *,
    background=(0.0, 0.0, 0.0),
    depth_mode: str = "normalized",
    z_near: float = Z_NEAR,
    low_pass: float = LOW_PASS,
    fused: bool = True,
) -> RenderOutput:
    """Render ``cloud`` (a GaussianCloud or CloudParams of tensors) from ``cam``.

    ``depth_mode="normalized"`` divides composited depth by accumulated
    opacity; ``"raw"`` returns the composited sum as is. ``fused=False``
    composes the same computation from elementary tensor ops, which is slower
    but serves as an independent check of the fused gradient.
    """
    if depth_mode not in DEPTH_MODES:
        raise ValueError(f"depth_mode must be one of {DEPTH_MODES}")
    params = _params(cloud)
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    proj = project(
        params.means, params.quats, params.log_scales, cam, z_near=z_near, low_pass=low_pass
    )
    if len(proj.index) == 0:
        return _empty(cam, bg)

    order = np.argsort(proj.depth.data, kind="stable")
    src = proj.index[order]
    mu = proj.means2d[order]
    cov = proj.cov2d[order]
    z = proj.depth[order]
    opacity = params.opacity_logits[src].sigmoid()
    rgb = view_colors(params.colors[src], params.means[src], cam, params.sh_degree)

    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    inv_det = 1.0 / (a * c - b * b)
    conic = stack([c * inv_det, b * inv_det, a * inv_det], axis=1)

    if fused:
        packed = composite(mu, conic, opacity, rgb, z, cam.height, cam.width)
        color, depth_sum = packed[:, 0:3], packed[:, 3]
        acc, trans = packed[:, 4], packed[:, 5]
    else:
        px, py = _pixel_grid(cam)
        color, depth_sum, acc, trans = _composite_reference(mu, conic, opacity, rgb, z, px, py)
    color = color + trans.reshape(-1, 1) * bg

    if depth_mode == "normalized":
        depth = depth_sum / maximum(acc, DEPTH_EPS)
    else:
        depth = depth_sum
    h, w = cam.height, cam.width
    return RenderOutput(
        color=ImageRGB(color.reshape(h, w, 3)),
        depth=DepthMap(depth.reshape(h, w)),
        alpha_acc=acc.reshape(h, w),
        transmittance=trans.reshape(h, w),
        n_visible=len(src),
    )
