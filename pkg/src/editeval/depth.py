"""Grayscale depth codec, per-image affine alignment and depth metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from editeval.core import RasterImage, ScalarField, ShapeError, masked_pairs

# ITU-R BT.709 luma weights
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)
DELTA1_THRESHOLD = 1.25


@dataclass(frozen=True)
class AffineFit:
    scale: float
    offset: float
    residual_rms: float
    n_pixels: int
    degenerate: bool = False


@dataclass(frozen=True)
class DepthMetrics:
    delta1: float
    absrel: float
    rmse: float


class DegenerateFitError(ValueError):
    """The prediction is constant over the valid pixels.

    ``fallback`` holds the constant fit ``a = 0, b = mean(gt)`` so callers
    can still report the sample.
    """

    def __init__(self, message: str, fallback: AffineFit) -> None:
        super().__init__(message)
        self.fallback = fallback


class EmptyMaskError(ValueError):
    pass


def decode_luminance(img: RasterImage) -> ScalarField:
    r, g, b = LUMA_WEIGHTS
    px = img.pixels
    lum = r * px[..., 0] + g * px[..., 1] + b * px[..., 2]
    # the weights sum to 1 only up to rounding
    return ScalarField.full(np.clip(lum, 0.0, 1.0))


def encode_depth_gray(depth: ScalarField) -> RasterImage:
    """Render depth as an achromatic image: nearest -> 1, farthest -> 0.

    Invalid pixels are black. A constant field renders its valid region at 1.
    """
    valid = depth.valid
    if not valid.any():
        raise EmptyMaskError("depth field has no valid pixels")
    d = depth.values[valid]
    if np.any(d <= 0):
        raise ValueError("valid depths must be strictly positive")
    d_min, d_max = float(d.min()), float(d.max())
    intensity = np.zeros(depth.shape)
    if d_max > d_min:
        intensity[valid] = 1.0 - (d - d_min) / (d_max - d_min)
    else:
        intensity[valid] = 1.0
    intensity = np.clip(intensity, 0.0, 1.0)
    return RasterImage(np.repeat(intensity[..., None], 3, axis=2))


def affine_align(pred: ScalarField, gt: ScalarField) -> tuple[AffineFit, ScalarField]:
    """Least-squares fit of ``gt ~ a * pred + b`` over jointly valid pixels.

    The scale may come out negative, which is what turns a bright-is-near
    rendering into depth. The aligned field keeps the joint validity mask.
    """
    pairs = masked_pairs(pred, gt)
    n = len(pairs)
    if n < 2:
        raise EmptyMaskError(f"need at least 2 jointly valid pixels, got {n}")
    p, g = pairs[:, 0], pairs[:, 1]

    # normal equations in centered form
    p_mean = p.mean()
    g_mean = g.mean()
    dp = p - p_mean
    sxx = float(np.dot(dp, dp))
    scale_ref = max(1.0, float(np.max(np.abs(p))))
    if sxx <= n * (1e-12 * scale_ref) ** 2:
        resid = g - g_mean
        fallback = AffineFit(0.0, float(g_mean), float(np.sqrt(np.mean(resid * resid))), n, True)
        raise DegenerateFitError("prediction is constant over valid pixels", fallback)
    a = float(np.dot(dp, g - g_mean) / sxx)
    b = float(g_mean - a * p_mean)

    resid = a * p + b - g
    fit = AffineFit(a, b, float(np.sqrt(np.mean(resid * resid))), n)
    joint = pred.valid & gt.valid
    return fit, ScalarField(a * pred.values + b, joint)


def apply_fit(pred: ScalarField, gt: ScalarField, fit: AffineFit) -> ScalarField:
    return ScalarField(fit.scale * pred.values + fit.offset, pred.valid & gt.valid)


def depth_metrics(aligned: ScalarField, gt: ScalarField) -> DepthMetrics:
    """delta1, AbsRel and RMSE over jointly valid pixels.

    Non-positive predictions count as delta1 failures and enter the other
    metrics unclamped.
    """
    pairs = masked_pairs(aligned, gt)
    if len(pairs) == 0:
        raise EmptyMaskError("no jointly valid pixels")
    pred, g = pairs[:, 0], pairs[:, 1]
    if np.any(g <= 0):
        raise ValueError("ground-truth depth must be strictly positive at valid pixels")

    positive = pred > 0
    ratio = np.full(pred.shape, np.inf)
    ratio[positive] = np.maximum(pred[positive] / g[positive], g[positive] / pred[positive])
    delta1 = float(np.mean(ratio < DELTA1_THRESHOLD))
    err = pred - g
    absrel = float(np.mean(np.abs(err) / g))
    rmse = float(math.sqrt(np.mean(err * err)))
    return DepthMetrics(delta1, absrel, rmse)


def degenerate_metrics(gt: ScalarField, fallback: AffineFit) -> DepthMetrics:
    """Metrics reported for a constant prediction.

    delta1 is pinned to its worst value; AbsRel and RMSE are those of the
    constant fallback fit.
    """
    g = gt.values[gt.valid]
    err = fallback.offset - g
    return DepthMetrics(0.0, float(np.mean(np.abs(err) / g)), float(math.sqrt(np.mean(err * err))))


EIGEN_CROP = (45, 471, 41, 601)  # rows [45, 471), cols [41, 601) at 480x640


def eval_mask(gt: ScalarField, crop: str | None = None, depth_cap: tuple[float, float] | None = None) -> np.ndarray:
    """Optional evaluation restrictions on top of the ground-truth mask."""
    mask = gt.valid.copy()
    if crop == "eigen":
        if gt.shape != (480, 640):
            raise ShapeError(f"eigen crop is defined for 480x640 ground truth, got {gt.shape}")
        top, bottom, left, right = EIGEN_CROP
        crop_mask = np.zeros_like(mask)
        crop_mask[top:bottom, left:right] = True
        mask &= crop_mask
    elif crop is not None:
        raise ValueError(f"unknown crop {crop!r}")
    if depth_cap is not None:
        lo, hi = depth_cap
        with np.errstate(invalid="ignore"):
            mask &= (gt.values >= lo) & (gt.values <= hi)
    return mask
