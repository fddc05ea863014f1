"""PFM depth and binary PPM image serialisation."""

from __future__ import annotations

import os
import re

import numpy as np

from .depth import DepthMap, ImageRGB


def _raw(x) -> np.ndarray:
    if isinstance(x, (DepthMap, ImageRGB)):
        return x.numpy()
    return np.asarray(x, dtype=np.float64)


def encode_pfm(depth) -> bytes:
    """Greyscale PFM, little-endian (scale -1.0), rows stored bottom-to-top."""
    arr = _raw(depth)
    if arr.ndim != 2:
        raise ValueError("PFM depth maps must be 2-D")
    h, w = arr.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.flipud(arr).astype("<f4").tobytes()
    return header + body


def decode_pfm(blob: bytes) -> np.ndarray:
    m = re.match(rb"(Pf|PF)\s+(\d+)\s+(\d+)\s+(\S+)\s", blob)
    if m is None:
        raise ValueError("not a PFM file")
    kind, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    if kind != b"Pf":
        raise ValueError("only greyscale PFM is supported")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(blob, dtype=dtype, count=w * h, offset=m.end())
    return np.flipud(data.reshape(h, w)).astype(np.float64)


def write_pfm(path: str | os.PathLike, depth) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pfm(depth))


def read_pfm(path: str | os.PathLike) -> DepthMap:
    with open(path, "rb") as fh:
        return DepthMap(decode_pfm(fh.read()))


def encode_ppm(image) -> bytes:
    """8-bit binary PPM (P6); values are clamped to [0, 1] here and only here."""
    arr = _raw(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("PPM images must be H x W x 3")
    h, w, _ = arr.shape
    pixels = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def decode_ppm(blob: bytes) -> np.ndarray:
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if m is None:
        raise ValueError("not a binary PPM file")
    w, h, maxval = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=m.end())
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_ppm(path: str | os.PathLike, image) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


def read_ppm(path: str | os.PathLike) -> ImageRGB:
    with open(path, "rb") as fh:
        return ImageRGB(decode_ppm(fh.read()))
