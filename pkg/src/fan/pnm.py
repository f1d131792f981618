"""Binary PGM (P5) and PPM (P6) reading and writing, maxval <= 255."""

from __future__ import annotations

import os

import numpy as np


class PNMError(ValueError):
    pass


def _tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping # comments."""
    out = []
    i = 2
    n = len(buf)
    while len(out) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and buf[j : j + 1].isdigit():
            j += 1
        if j == i:
            raise PNMError("malformed header")
        out.append(int(buf[i:j]))
        i = j
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    """Return uint8 H x W (P5) or H x W x 3 (P6)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PNMError(f"{path}: unsupported magic {magic!r}")
    (w, h, maxval), start = _tokens(buf, 3)
    if not 0 < maxval <= 255:
        raise PNMError(f"{path}: maxval {maxval} unsupported")
    ch = 1 if magic == b"P5" else 3
    if len(buf) - start < w * h * ch:
        raise PNMError(f"{path}: raster truncated")
    raster = np.frombuffer(buf, dtype=np.uint8, count=w * h * ch, offset=start)
    shape = (h, w) if ch == 1 else (h, w, 3)
    return raster.reshape(shape).copy()


def read_pgm(path) -> np.ndarray:
    """Grayscale image scaled to [0, 1] float64."""
    img = read_pnm(path)
    if img.ndim != 2:
        raise PNMError(f"{path}: expected a PGM (P5) image")
    return img.astype(np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(np.asarray(img, dtype=float) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    """Write a [0, 1] float or uint8 grayscale array as P5."""
    a = img if img.dtype == np.uint8 else to_uint8(img)
    if a.ndim != 2:
        raise PNMError("PGM data must be 2-D")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an H x W x 3 uint8 (or [0, 1] float) array as P6."""
    a = rgb if rgb.dtype == np.uint8 else to_uint8(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise PNMError("PPM data must be H x W x 3")
    h, w, _ = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())
