"""Palette-based segmentation: prompts, nearest-color decoding and mIoU."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from itertools import combinations
from typing import Literal

import numpy as np

from editeval.cityscapes import CATEGORIES7, CLASSES19
from editeval.core import BACKGROUND_ID, LabelMap, LabelSpace, RasterImage, ShapeError

MIN_PALETTE_DISTANCE = 32.0
BACKGROUND_RGB = (0, 0, 0)

Granularity = Literal["classes19", "categories7"]


@dataclass(frozen=True)
class PaletteEntry:
    class_id: int
    class_name: str
    color_name: str
    rgb: tuple[int, int, int]


@dataclass(frozen=True)
class Palette:
    """Prompt colors per class; black is reserved for the background."""

    version: str
    entries: tuple[PaletteEntry, ...]

    def __post_init__(self) -> None:
        colors = [e.rgb for e in self.entries] + [BACKGROUND_RGB]
        for rgb in colors:
            if len(rgb) != 3 or any(not 0 <= c <= 255 for c in rgb):
                raise ValueError(f"invalid byte triple {rgb}")
        for a, b in combinations(colors, 2):
            d = float(np.linalg.norm(np.subtract(a, b, dtype=np.float64)))
            if d < MIN_PALETTE_DISTANCE:
                raise ValueError(f"palette colors {a} and {b} are only {d:.1f} apart")
        ids = [e.class_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("palette class ids are not unique")

    def __getitem__(self, class_id: int) -> PaletteEntry:
        for e in self.entries:
            if e.class_id == class_id:
                return e
        raise KeyError(f"class id {class_id} is not in palette {self.version}")

    @property
    def ids(self) -> list[int]:
        return [e.class_id for e in self.entries]

    def min_distance(self) -> float:
        colors = [e.rgb for e in self.entries] + [BACKGROUND_RGB]
        return min(
            float(np.linalg.norm(np.subtract(a, b, dtype=np.float64))) for a, b in combinations(colors, 2)
        )

    def to_text(self) -> str:
        lines = [f"# palette: {self.version}", "# class_id\tclass_name\tcolor_name\tR\tG\tB"]
        for e in self.entries:
            lines.append("\t".join([str(e.class_id), e.class_name, e.color_name, *map(str, e.rgb)]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Palette:
        version = "unversioned"
        entries = []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if key.strip() == "palette":
                    version = value.strip()
                continue
            cid, name, color, r, g, b = line.split("\t")
            entries.append(PaletteEntry(int(cid), name, color, (int(r), int(g), int(b))))
        return cls(version, tuple(entries))


def load_palette(granularity: Granularity) -> Palette:
    text = resources.files("editeval.data").joinpath(f"palette_{granularity}.tsv").read_text("utf-8")
    return Palette.from_text(text)


PALETTE19 = load_palette("classes19")
PALETTE7 = load_palette("categories7")

CATEGORY_PHRASES = {
    "flat": "all roads and sidewalks",
    "construction": "all buildings, walls and fences",
    "object": "all poles, traffic lights and traffic signs",
    "nature": "all vegetation and terrain",
    "sky": "the sky",
    "human": "all people and riders",
    "vehicle": "all vehicles",
}


def space_for(granularity: Granularity) -> LabelSpace:
    return CLASSES19 if granularity == "classes19" else CATEGORIES7


def palette_for(granularity: Granularity) -> Palette:
    return PALETTE19 if granularity == "classes19" else PALETTE7


def oracle_class_list(gt: LabelMap, space: LabelSpace | None = None) -> list[int]:
    """Sorted distinct non-ignore class ids present in the ground truth."""
    present = np.unique(gt.labels)
    ids = [int(i) for i in present if i != gt.ignore_id and i != BACKGROUND_ID]
    if space is not None:
        unknown = [i for i in ids if i not in space]
        if unknown:
            raise ValueError(f"labels {unknown} are not in space {space.name}")
    return ids


def build_prompt(
    classes: list[int],
    space: LabelSpace,
    palette: Palette,
    granularity: Granularity = "classes19",
) -> str:
    if not classes:
        raise ValueError("cannot build a segmentation prompt without classes")
    entries = [palette[c] for c in classes]
    if granularity == "classes19":
        clauses = [f"the {space[e.class_id].name} {e.color_name}" for e in entries]
        return f"Convert this photo into a color-coded map: {', '.join(clauses)}, and everything else black."
    if granularity == "categories7":
        clauses = [f"{CATEGORY_PHRASES[space[e.class_id].name]} solid {e.color_name}" for e in entries]
        return (
            "Turn this image into a flat segmentation mask using only solid colors. "
            f"Paint {', '.join(clauses)}, and everything else solid black. No textures, no gradients."
        )
    raise ValueError(f"unknown granularity {granularity!r}")


def decode_palette(
    img: RasterImage,
    prompted: list[int],
    palette: Palette,
    space: LabelSpace | None = None,
) -> LabelMap:
    """Assign each pixel to the nearest prompted color or the black background.

    Distances are computed in byte units so that exact midpoints tie exactly.
    Ties go to the lowest class id; the background loses every tie.
    """
    ids = sorted(set(prompted))
    colors = np.array([palette[c].rgb for c in ids] + [BACKGROUND_RGB], dtype=np.float64)
    labels_lut = np.array(ids + [BACKGROUND_ID], dtype=np.int64)

    rgb = img.pixels.reshape(-1, 3) * 255.0
    best = np.zeros(len(rgb), dtype=np.intp)
    best_d = np.full(len(rgb), np.inf)
    for k, color in enumerate(colors):
        diff = rgb - color
        d = np.einsum("ij,ij->i", diff, diff)
        closer = d < best_d  # strict: earlier candidate keeps ties
        best[closer] = k
        best_d[closer] = d[closer]
    return LabelMap(labels_lut[best].reshape(img.height, img.width), space)


def render_palette(labels: LabelMap, palette: Palette) -> RasterImage:
    """Paint a label map in palette colors; background and void become black."""
    out = np.zeros(labels.shape + (3,), dtype=np.float64)
    for e in palette.entries:
        out[labels.labels == e.class_id] = np.asarray(e.rgb) / 255.0
    return RasterImage(out)


def group_to_categories(map19: LabelMap, space: LabelSpace | None = None) -> LabelMap:
    space = space or map19.space
    if space is None or space.grouping is None:
        raise ValueError("label space has no grouping table")
    lab = map19.labels
    out = np.full(lab.shape, map19.ignore_id, dtype=np.int64)
    out[lab == BACKGROUND_ID] = BACKGROUND_ID
    handled = (lab == map19.ignore_id) | (lab == BACKGROUND_ID)
    for cid, gid in space.grouping.items():
        hit = lab == cid
        out[hit] = gid
        handled |= hit
    if not handled.all():
        raise ValueError(f"classes without a group entry: {sorted(set(lab[~handled].tolist()))}")
    return LabelMap(out, space.group_space, map19.ignore_id)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed ``[gt, pred]`` over the space's classes plus a final
    background column/row for pixels decoded to the black background."""

    space: LabelSpace
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        k = self.space.num_classes + 1
        if counts.shape != (k, k):
            raise ShapeError(f"expected {(k, k)} counts, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts = counts.copy()
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, space: LabelSpace) -> ConfusionMatrix:
        k = space.num_classes + 1
        return cls(space, np.zeros((k, k), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        if other.space != self.space:
            raise ValueError("cannot merge confusion matrices over different label spaces")
        return ConfusionMatrix(self.space, self.counts + other.counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.counts, other.counts)


def _index_lut(space: LabelSpace) -> np.ndarray:
    # label value -> matrix index; anything unknown lands on background
    lut = np.full(256, space.num_classes, dtype=np.intp)
    for idx, cid in enumerate(space.ids):
        lut[cid] = idx
    return lut


def accumulate_confusion(pred: LabelMap, gt: LabelMap, matrix: ConfusionMatrix) -> ConfusionMatrix:
    if pred.shape != gt.shape:
        raise ShapeError(f"label map shapes differ: {pred.shape} vs {gt.shape}")
    space = matrix.space
    for m in (pred, gt):
        if m.space is not None and m.space != space:
            raise ValueError(f"label map space {m.space.name} != matrix space {space.name}")
    keep = gt.labels != gt.ignore_id
    g = gt.labels[keep]
    if np.any(~np.isin(g, space.ids)):
        raise ValueError("ground truth contains labels outside the label space")
    lut = _index_lut(space)
    gi = lut[g]
    pi = lut[np.clip(pred.labels[keep], 0, 255)]
    k = space.num_classes + 1
    add = np.bincount(gi * k + pi, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(space, matrix.counts + add)


@dataclass(frozen=True)
class SegMetrics:
    miou: float
    pixel_acc: float
    per_class_iou: tuple[tuple[int, float | None], ...]


def seg_metrics(matrix: ConfusionMatrix) -> SegMetrics:
    """IoU per class (undefined when the class never occurs), mIoU, pixel accuracy."""
    total = matrix.total
    if total == 0:
        raise ValueError("confusion matrix is empty")
    c = matrix.counts
    n = matrix.space.num_classes
    tp = np.diag(c)[:n]
    fp = c[:, :n].sum(axis=0) - tp
    fn = c[:n, :].sum(axis=1) - tp
    union = tp + fp + fn
    per_class = []
    defined = []
    for idx, cid in enumerate(matrix.space.ids):
        if union[idx] == 0:
            per_class.append((cid, None))
        else:
            iou = float(tp[idx]) / float(union[idx])
            per_class.append((cid, iou))
            defined.append(iou)
    miou = float(np.mean(defined)) if defined else 0.0
    return SegMetrics(miou, float(tp.sum()) / total, tuple(per_class))


def group_confusion(matrix: ConfusionMatrix) -> ConfusionMatrix:
    """Relabel a fine confusion matrix through the space's grouping table."""
    space = matrix.space
    if space.grouping is None or space.group_space is None:
        raise ValueError("label space has no grouping table")
    coarse = space.group_space
    coarse_idx = {cid: i for i, cid in enumerate(coarse.ids)}
    mapping = [coarse_idx[space.grouping[cid]] for cid in space.ids] + [coarse.num_classes]
    k = coarse.num_classes + 1
    out = np.zeros((k, k), dtype=np.int64)
    for i, gi in enumerate(mapping):
        for j, gj in enumerate(mapping):
            out[gi, gj] += matrix.counts[i, j]
    return ConfusionMatrix(coarse, out)
