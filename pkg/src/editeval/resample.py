"""Bilinear and nearest-neighbor resizing with half-pixel alignment.

Source coordinate for output index ``i`` is ``(i + 0.5) * src / dst - 0.5``,
clamped to the border. Nearest uses ``floor((i + 0.5) * src / dst)``.
"""

from __future__ import annotations

import numpy as np

from editeval.core import RasterImage


def _check_target(out_w: int, out_h: int) -> None:
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target size must be at least 1x1, got {out_w}x{out_h}")


def _linear_taps(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    x = np.clip(x, 0.0, src - 1)
    x0 = np.floor(x).astype(np.intp)
    x1 = np.minimum(x0 + 1, src - 1)
    return x0, x1, x - x0


def _nearest_index(src: int, dst: int) -> np.ndarray:
    # exact integer form of floor((i + 0.5) * src / dst)
    i = np.arange(dst, dtype=np.int64)
    return np.minimum(((2 * i + 1) * src) // (2 * dst), src - 1).astype(np.intp)


def bilinear_array(arr: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinearly resize an ``(H, W)`` or ``(H, W, C)`` float array."""
    _check_target(out_w, out_h)
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    y0, y1, wy = _linear_taps(h, out_h)
    x0, x1, wx = _linear_taps(w, out_w)
    extra = (1,) * (arr.ndim - 2)
    wy = wy.reshape((-1, 1) + extra)
    wx = wx.reshape((1, -1) + extra)

    top, bottom = arr[y0], arr[y1]
    rows = top + wy * (bottom - top)
    left, right = rows[:, x0], rows[:, x1]
    out = left + wx * (right - left)

    # rounding in the lerp can step an ulp outside the source range
    axes = (0, 1)
    return np.clip(out, arr.min(axis=axes), arr.max(axis=axes))


def nearest_array(arr: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    _check_target(out_w, out_h)
    arr = np.asarray(arr)
    h, w = arr.shape[:2]
    return arr[_nearest_index(h, out_h)][:, _nearest_index(w, out_w)]


def resize_bilinear(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    return RasterImage(bilinear_array(img.pixels, out_w, out_h))


def resize_nearest(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    return RasterImage(nearest_array(img.pixels, out_w, out_h))
