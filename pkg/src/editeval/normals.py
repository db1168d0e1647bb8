"""Normal-map codec, axis-convention calibration and angular-error metrics."""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from editeval.core import NormalField, RasterImage, ShapeError

THRESHOLDS_DEG = (11.25, 22.5, 30.0)
MIN_NORM = 1e-6
# Decoding threshold for 8-bit inputs: a mid-gray pixel (127 or 128 per
# channel) decodes to a vector of norm sqrt(3)/255 and must stay invalid.
MIN_NORM_8BIT = 2.0 / 255.0


@dataclass(frozen=True)
class AxisConvention:
    """Output component ``k`` is ``signs[k] * v[perm[k]]``."""

    perm: tuple[int, int, int]
    signs: tuple[int, int, int]

    def __post_init__(self) -> None:
        if sorted(self.perm) != [0, 1, 2]:
            raise ValueError(f"not a permutation of (0, 1, 2): {self.perm}")
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError(f"signs must be +1 or -1: {self.signs}")

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((3, 3))
        for k in range(3):
            m[k, self.perm[k]] = self.signs[k]
        return m

    def inverse(self) -> AxisConvention:
        inv_perm = [0, 0, 0]
        for k, p in enumerate(self.perm):
            inv_perm[p] = k
        inv_signs = tuple(self.signs[inv_perm[j]] for j in range(3))
        return AxisConvention(tuple(inv_perm), inv_signs)

    def then(self, other: AxisConvention) -> AxisConvention:
        """Composition: apply ``self`` first, then ``other``."""
        perm = tuple(self.perm[other.perm[k]] for k in range(3))
        signs = tuple(other.signs[k] * self.signs[other.perm[k]] for k in range(3))
        return AxisConvention(perm, signs)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        return vectors[..., list(self.perm)] * np.asarray(self.signs, dtype=np.float64)

    def __str__(self) -> str:
        axes = "xyz"
        return " ".join(("+" if s > 0 else "-") + axes[p] for p, s in zip(self.perm, self.signs))


IDENTITY = AxisConvention((0, 1, 2), (1, 1, 1))


def all_conventions() -> list[AxisConvention]:
    """All 48 conventions, permutation-major; index 0 is the identity."""
    return [
        AxisConvention(perm, signs)
        for perm in itertools.permutations((0, 1, 2))
        for signs in itertools.product((1, -1), repeat=3)
    ]


@dataclass(frozen=True)
class NormalMetrics:
    mean_deg: float
    median_deg: float
    a11: float
    a22: float
    a30: float


class NoValidPixelsError(ValueError):
    pass


def encode_normals(field: NormalField) -> RasterImage:
    rgb = np.full(field.vectors.shape, 0.5)
    v = field.vectors[field.valid]
    rgb[field.valid] = np.clip((v + 1.0) / 2.0, 0.0, 1.0)
    return RasterImage(rgb)


def decode_normals(img: RasterImage, min_norm: float = MIN_NORM) -> NormalField:
    """Invert ``rgb = (n + 1) / 2`` and renormalize.

    Vectors shorter than ``min_norm`` are marked invalid instead of being
    given a default direction.
    """
    v = 2.0 * img.pixels - 1.0
    norm = np.linalg.norm(v, axis=-1)
    valid = norm >= min_norm
    out = np.zeros_like(v)
    out[valid] = v[valid] / norm[valid][:, None]
    return NormalField(out, valid)


def apply_convention(field: NormalField, conv: AxisConvention) -> NormalField:
    return NormalField(conv.apply(field.vectors), field.valid)


def _angles_deg(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    # atan2(|p x g|, p . g) equals arccos(clamp(p . g)) for unit vectors and
    # stays exact at 0 and 180 degrees, where arccos loses half the digits.
    cross = np.cross(p, g)
    dot = np.einsum("...k,...k->...", p, g)
    return np.degrees(np.arctan2(np.linalg.norm(cross, axis=-1), dot))


def angular_error(pred: NormalField, gt: NormalField) -> np.ndarray:
    """Per-pixel angle in degrees over jointly valid pixels, row-major."""
    if pred.shape != gt.shape:
        raise ShapeError(f"field shapes differ: {pred.shape} vs {gt.shape}")
    joint = pred.valid & gt.valid
    return _angles_deg(pred.vectors[joint], gt.vectors[joint])


@dataclass(frozen=True)
class Calibration:
    convention: AxisConvention
    mean_errors: tuple[float, ...]  # one per entry of all_conventions()
    n_pixels: int

    @property
    def best_error(self) -> float:
        return self.mean_errors[all_conventions().index(self.convention)]


def calibrate_convention(
    samples: Sequence[tuple[NormalField, NormalField]], k: int = 5
) -> Calibration:
    """Pick the convention that, applied to the predictions, best matches GT.

    Uses the first ``k`` (pred, gt) pairs. The error for each convention is
    the mean angle pooled over all jointly valid pixels of the subset; ties
    go to the earliest convention in enumeration order.
    """
    subset = list(samples)[:k]
    if not subset:
        raise ValueError("calibration needs at least one sample")
    preds, gts = [], []
    for pred, gt in subset:
        if pred.shape != gt.shape:
            raise ShapeError(f"field shapes differ: {pred.shape} vs {gt.shape}")
        joint = pred.valid & gt.valid
        preds.append(pred.vectors[joint])
        gts.append(gt.vectors[joint])
    p = np.concatenate(preds)
    g = np.concatenate(gts)
    if len(p) == 0:
        raise NoValidPixelsError("no jointly valid pixels in the calibration subset")

    convs = all_conventions()
    errors = tuple(float(np.mean(_angles_deg(c.apply(p), g))) for c in convs)
    best = int(np.argmin(errors))  # first minimum wins
    return Calibration(convs[best], errors, len(p))


def normal_metrics(errors: np.ndarray) -> NormalMetrics:
    """Mean, median and A11/A22/A30 (strictly below threshold, in percent)."""
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise NoValidPixelsError("no angular errors to summarize")
    a11, a22, a30 = (100.0 * float(np.mean(e < t)) for t in THRESHOLDS_DEG)
    return NormalMetrics(float(np.mean(e)), float(np.median(e)), a11, a22, a30)


class NormalAccumulator:
    """Pools per-pixel errors across a dataset.

    Keeps exact counts and float64 sums per added chunk; the raw errors are
    retained as float32 for the pooled median.
    """

    def __init__(self) -> None:
        self._chunks: list[np.ndarray] = []
        self.count = 0
        self.total = 0.0
        self.below = [0, 0, 0]

    def add(self, errors: np.ndarray) -> None:
        e = np.asarray(errors, dtype=np.float64).ravel()
        self._chunks.append(e.astype(np.float32))
        self.count += e.size
        self.total += float(np.sum(e))
        for i, t in enumerate(THRESHOLDS_DEG):
            self.below[i] += int(np.count_nonzero(e < t))

    def metrics(self) -> NormalMetrics:
        if self.count == 0:
            raise NoValidPixelsError("no angular errors to summarize")
        median = float(np.median(np.concatenate(self._chunks).astype(np.float64)))
        a11, a22, a30 = (100.0 * b / self.count for b in self.below)
        return NormalMetrics(self.total / self.count, median, a11, a22, a30)
