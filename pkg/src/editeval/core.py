"""Raster, field and label types shared by every codec and metric.

All arrays are stored row-major with a top-left origin and are frozen
(``writeable=False``) after construction, so values can be shared freely
between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

IGNORE_ID = 255
# Label emitted by palette decoding for pixels claimed by the black background.
BACKGROUND_ID = 254


class ShapeError(ValueError):
    """Raised when array sizes or dimensions disagree."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    """An RGB image with channels in ``[0, 1]``, shape ``(H, W, 3)``."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"pixels must have shape (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeError("image must have at least one pixel")
        if not np.all((px >= 0.0) & (px <= 1.0)):
            raise ValueError("channel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Per-pixel scalar values (depth or luminance) with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2:
            raise ShapeError(f"values must be 2-D, got shape {values.shape}")
        if valid.shape != values.shape:
            raise ShapeError(f"mask shape {valid.shape} != values shape {values.shape}")
        valid = valid & np.isfinite(values)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def full(cls, values: np.ndarray) -> ScalarField:
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_mask(self, mask: np.ndarray) -> ScalarField:
        """Return a copy whose validity is additionally restricted by ``mask``."""
        return ScalarField(self.values, self.valid & np.asarray(mask, dtype=bool))


@dataclass(frozen=True, eq=False)
class NormalField:
    """Per-pixel 3-vectors, shape ``(H, W, 3)``; valid vectors are unit length."""

    vectors: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.vectors, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if vec.ndim != 3 or vec.shape[2] != 3:
            raise ShapeError(f"vectors must have shape (H, W, 3), got {vec.shape}")
        if valid.shape != vec.shape[:2]:
            raise ShapeError(f"mask shape {valid.shape} != field shape {vec.shape[:2]}")
        valid = valid & np.all(np.isfinite(vec), axis=2)
        norms = np.linalg.norm(vec[valid], axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("valid normal vectors must be unit length")
        object.__setattr__(self, "vectors", _frozen(vec))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]


@dataclass(frozen=True)
class LabelClass:
    id: int
    name: str
    color: tuple[int, int, int]


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class list, optionally with a grouping into a coarser space."""

    name: str
    classes: tuple[LabelClass, ...]
    grouping: dict[int, int] | None = field(default=None, hash=False)
    group_space: LabelSpace | None = field(default=None, hash=False)

    def __post_init__(self) -> None:
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.name}: class ids are not unique")
        colors = [tuple(c.color) for c in self.classes]
        if len(set(colors)) != len(colors):
            raise ValueError(f"{self.name}: display colors are not pairwise distinct")
        if any(i in (IGNORE_ID, BACKGROUND_ID) or i < 0 for i in ids):
            raise ValueError(f"{self.name}: ids {IGNORE_ID} and {BACKGROUND_ID} are reserved")
        if self.grouping is not None:
            missing = set(ids) - set(self.grouping)
            if missing:
                raise ValueError(f"{self.name}: grouping is missing class ids {sorted(missing)}")
            if self.group_space is not None:
                unknown = set(self.grouping.values()) - set(self.group_space.ids)
                if unknown:
                    raise ValueError(f"{self.name}: grouping targets unknown ids {sorted(unknown)}")

    @property
    def ids(self) -> list[int]:
        return [c.id for c in self.classes]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def __getitem__(self, class_id: int) -> LabelClass:
        for c in self.classes:
            if c.id == class_id:
                return c
        raise KeyError(class_id)

    def __contains__(self, class_id: object) -> bool:
        return class_id in self.ids

    def id_of(self, name: str) -> int:
        for c in self.classes:
            if c.name == name:
                return c.id
        raise KeyError(name)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Integer class map. ``ignore_id`` marks void pixels.

    Decoded predictions may additionally carry ``BACKGROUND_ID`` for pixels
    assigned to the black background.
    """

    labels: np.ndarray
    space: LabelSpace | None = None
    ignore_id: int = IGNORE_ID

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ShapeError(f"labels must be 2-D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise TypeError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.space is not None:
            allowed = np.array(sorted(set(self.space.ids) | {self.ignore_id, BACKGROUND_ID}))
            bad = ~np.isin(labels, allowed)
            if np.any(bad):
                raise ValueError(
                    f"labels {sorted(set(labels[bad].tolist()))[:10]} are not in space {self.space.name}"
                )
        object.__setattr__(self, "labels", _frozen(labels))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (
            self.ignore_id == other.ignore_id
            and self.space == other.space
            and np.array_equal(self.labels, other.labels)
        )


def image_from_bytes(raw: bytes | np.ndarray, width: int, height: int) -> RasterImage:
    """Build a RasterImage from a packed 8-bit RGB buffer (channel = byte / 255)."""
    buf = np.frombuffer(bytes(raw), dtype=np.uint8) if not isinstance(raw, np.ndarray) else raw.ravel()
    expected = 3 * width * height
    if buf.size != expected:
        raise ShapeError(f"expected {expected} bytes for {width}x{height} RGB, got {buf.size}")
    return RasterImage(buf.astype(np.float64).reshape(height, width, 3) / 255.0)


def bytes_from_image(img: RasterImage) -> bytes:
    """Quantize to 8 bits per channel (round half to even) and pack row-major."""
    return to_uint8(img).tobytes()


def to_uint8(img: RasterImage) -> np.ndarray:
    return np.round(img.pixels * 255.0).astype(np.uint8)


def masked_pairs(a: ScalarField, b: ScalarField) -> np.ndarray:
    """Stack ``(a_i, b_i)`` over jointly valid pixels in row-major order.

    Returns an array of shape ``(N, 2)``.
    """
    if a.shape != b.shape:
        raise ShapeError(f"field shapes differ: {a.shape} vs {b.shape}")
    joint = a.valid & b.valid
    return np.stack([a.values[joint], b.values[joint]], axis=1)


def read_image(path: str | Path) -> RasterImage:
    """Load an image file as 8-bit RGB (alpha dropped, palette expanded)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return RasterImage(arr.astype(np.float64) / 255.0)


def write_image(img: RasterImage, path: str | Path) -> None:
    Image.fromarray(to_uint8(img)).save(path, format="PNG")
