"""Prepared-dataset layout and ingestion of NYUv2, DIODE and Cityscapes.

A prepared dataset is a directory holding ``manifest.jsonl`` (one sample per
line, sorted by ``sample_id``) plus ``images/`` and ``gt/``. Ground truth is
stored in one of four kinds:

- ``depth16``: 16-bit grayscale PNG, millimetres, 0 = invalid
- ``depth_raw_f32``: DCF32 plane (see :func:`write_f32_plane`), 0 = invalid
- ``normals_png``: 8-bit normal map, ``rgb = (n + 1) / 2``, mid-gray = invalid
- ``labels_png``: 8-bit Cityscapes train ids, 255 = void
"""

from __future__ import annotations

import json
import logging
import shutil
import struct
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image

from editeval.cityscapes import CLASSES19, label_ids_to_train_ids
from editeval.core import LabelMap, NormalField, ScalarField, ShapeError, read_image
from editeval.normals import MIN_NORM_8BIT, decode_normals

log = logging.getLogger(__name__)

GtKind = Literal["depth16", "depth_raw_f32", "normals_png", "labels_png"]
Task = Literal["depth", "normals", "segmentation"]

MANIFEST = "manifest.jsonl"
F32_MAGIC = b"DCF32\0"
_F32_HEADER = struct.Struct("<6sIIH")  # magic, width, height, reserved -> 16 bytes
IMAGE_EXTS = (".png", ".jpg", ".jpeg")

TASK_OF_KIND = {
    "depth16": "depth",
    "depth_raw_f32": "depth",
    "normals_png": "normals",
    "labels_png": "segmentation",
}


@dataclass(frozen=True)
class PreparedSample:
    sample_id: str
    dataset_id: str
    input_path: str  # relative to the prepared directory
    gt_path: str
    gt_kind: GtKind
    width: int
    height: int
    provenance: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> PreparedSample:
        return cls(**json.loads(line))


@dataclass(frozen=True)
class DatasetSpec:
    dataset_id: str
    task: Task
    expected_count: int
    resolution: tuple[int, int]  # (width, height)


OFFICIAL_SPECS = {
    s.dataset_id: s
    for s in [
        DatasetSpec("nyuv2", "depth", 654, (640, 480)),
        DatasetSpec("nyuv2_normals", "normals", 654, (640, 480)),
        DatasetSpec("diode_indoor", "depth", 771, (1024, 768)),
        DatasetSpec("diode_outdoor", "depth", 446, (1024, 768)),
        DatasetSpec("cityscapes", "segmentation", 500, (2048, 1024)),
    ]
}


class DatasetValidationWarning(UserWarning):
    pass


@dataclass
class ValidationReport:
    dataset_id: str
    expected_count: int
    actual_count: int
    bad_resolution: list[tuple[str, int, int]] = field(default_factory=list)
    missing_files: list[str] = field(default_factory=list)

    @property
    def count_ok(self) -> bool:
        return self.actual_count == self.expected_count

    @property
    def ok(self) -> bool:
        return self.count_ok and not self.bad_resolution and not self.missing_files

    def messages(self) -> list[str]:
        out = []
        if not self.count_ok:
            out.append(f"{self.dataset_id}: expected {self.expected_count} samples, found {self.actual_count}")
        for sid, w, h in self.bad_resolution[:5]:
            out.append(f"{self.dataset_id}: sample {sid} is {w}x{h}")
        if len(self.bad_resolution) > 5:
            out.append(f"{self.dataset_id}: {len(self.bad_resolution) - 5} more samples with wrong resolution")
        for path in self.missing_files[:5]:
            out.append(f"{self.dataset_id}: missing file {path}")
        return out


def validate_samples(
    samples: list[PreparedSample],
    spec: DatasetSpec,
    prepared_dir: str | Path | None = None,
) -> ValidationReport:
    """Check count and resolution against ``spec``; warn on every mismatch.

    With ``prepared_dir``, also check that referenced files exist.
    """
    report = ValidationReport(spec.dataset_id, spec.expected_count, len(samples))
    w, h = spec.resolution
    for s in samples:
        if (s.width, s.height) != (w, h):
            report.bad_resolution.append((s.sample_id, s.width, s.height))
        if prepared_dir is not None:
            for rel in (s.input_path, s.gt_path):
                if not (Path(prepared_dir) / rel).is_file():
                    report.missing_files.append(rel)
    for msg in report.messages():
        warnings.warn(msg, DatasetValidationWarning, stacklevel=2)
    return report


def write_manifest(samples: list[PreparedSample], prepared_dir: str | Path) -> Path:
    path = Path(prepared_dir) / MANIFEST
    ordered = sorted(samples, key=lambda s: s.sample_id)
    path.write_text("".join(s.to_json() + "\n" for s in ordered), encoding="utf-8")
    return path


def read_manifest(prepared_dir: str | Path) -> list[PreparedSample]:
    path = Path(prepared_dir) / MANIFEST
    with open(path, encoding="utf-8") as f:
        return [PreparedSample.from_json(line) for line in f if line.strip()]


# -- raw float planes ---------------------------------------------------------


def write_f32_plane(values: np.ndarray, path: str | Path) -> None:
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ShapeError(f"plane must be 2-D, got {values.shape}")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(_F32_HEADER.pack(F32_MAGIC, w, h, 0))
        f.write(np.ascontiguousarray(values).tobytes())


def read_f32_plane(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _F32_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, w, h, _ = _F32_HEADER.unpack_from(data)
    if magic != F32_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _F32_HEADER.size + 4 * w * h
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {w}x{h}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=_F32_HEADER.size).reshape(h, w).astype(np.float64)


# -- ground-truth loading -----------------------------------------------------


def read_depth16(path: str | Path) -> ScalarField:
    with Image.open(path) as im:
        raw = np.asarray(im).astype(np.float64)
    if raw.ndim != 2:
        raise ValueError(f"{path}: expected single-channel depth PNG")
    return ScalarField(raw / 1000.0, raw > 0)


def write_depth16(depth_m: np.ndarray, valid: np.ndarray, path: str | Path) -> None:
    mm = np.where(valid, np.round(np.asarray(depth_m) * 1000.0), 0)
    if mm.max(initial=0) > 65535:
        raise ValueError("depth exceeds the 16-bit millimetre range")
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")


def read_depth_f32(path: str | Path) -> ScalarField:
    values = read_f32_plane(path)
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(values) & (values > 0)
    return ScalarField(np.where(valid, values, 0.0), valid)


def read_normals_png(path: str | Path) -> NormalField:
    return decode_normals(read_image(path), min_norm=MIN_NORM_8BIT)


def read_labels_png(path: str | Path) -> LabelMap:
    with Image.open(path) as im:
        labels = np.asarray(im)
    if labels.ndim != 2:
        raise ValueError(f"{path}: expected single-channel label PNG")
    return LabelMap(labels.astype(np.int64), CLASSES19)


def write_labels_png(labels: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(labels).astype(np.uint8)).save(path, format="PNG")


def load_gt(sample: PreparedSample, prepared_dir: str | Path) -> ScalarField | NormalField | LabelMap:
    path = Path(prepared_dir) / sample.gt_path
    if sample.gt_kind == "depth16":
        gt = read_depth16(path)
    elif sample.gt_kind == "depth_raw_f32":
        gt = read_depth_f32(path)
    elif sample.gt_kind == "normals_png":
        gt = read_normals_png(path)
    elif sample.gt_kind == "labels_png":
        gt = read_labels_png(path)
    else:
        raise ValueError(f"unknown gt kind {sample.gt_kind!r}")
    if gt.shape != (sample.height, sample.width):
        raise ShapeError(f"{path}: {gt.shape[1]}x{gt.shape[0]} != declared {sample.width}x{sample.height}")
    return gt


# -- ingestion ----------------------------------------------------------------


def _find_image(folder: Path, stem: str) -> Path | None:
    for ext in IMAGE_EXTS:
        p = folder / f"{stem}{ext}"
        if p.is_file():
            return p
    return None


def _copy_rgb(src: Path, dst: Path) -> tuple[int, int]:
    dst.parent.mkdir(parents=True, exist_ok=True)
    with Image.open(src) as im:
        size = im.size
        if src.suffix.lower() == ".png" and im.mode == "RGB":
            shutil.copyfile(src, dst)
        else:
            im.convert("RGB").save(dst, format="PNG")
    return size


def _prepare_dirs(out: Path) -> None:
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)


def _finish(samples: list[PreparedSample], out: Path, dataset_id: str, validate: bool) -> list[PreparedSample]:
    samples = sorted(samples, key=lambda s: s.sample_id)
    write_manifest(samples, out)
    if validate and dataset_id in OFFICIAL_SPECS:
        validate_samples(samples, OFFICIAL_SPECS[dataset_id])
    log.info("prepared %d samples for %s in %s", len(samples), dataset_id, out)
    return samples


def ingest_nyuv2_depth(
    root: str | Path, out: str | Path, provenance: str = "raw", validate: bool = True
) -> list[PreparedSample]:
    """Ingest ``root/rgb/<id>.(png|jpg)`` with ``root/depth/<id>.png``.

    Depth PNGs are 16-bit millimetres with 0 marking missing measurements.
    ``provenance`` records which depth fill-in the PNGs come from.
    """
    root, out = Path(root), Path(out)
    _prepare_dirs(out)
    samples = []
    for depth_path in sorted((root / "depth").glob("*.png")):
        sid = depth_path.stem
        rgb = _find_image(root / "rgb", sid)
        if rgb is None:
            log.warning("no RGB image for depth map %s", depth_path)
            continue
        w, h = _copy_rgb(rgb, out / "images" / f"{sid}.png")
        with Image.open(depth_path) as im:
            if im.mode not in ("I;16", "I;16B", "I", "L"):
                raise ValueError(f"{depth_path}: expected 16-bit grayscale, got mode {im.mode}")
            if im.size != (w, h):
                raise ShapeError(f"{depth_path}: size {im.size} != image size {(w, h)}")
        shutil.copyfile(depth_path, out / "gt" / f"{sid}.png")
        samples.append(
            PreparedSample(sid, "nyuv2", f"images/{sid}.png", f"gt/{sid}.png", "depth16", w, h, f"depth:{provenance}")
        )
    return _finish(samples, out, "nyuv2", validate)


def ingest_nyuv2_normals(
    root: str | Path, out: str | Path, stored_convention: str = "+x +y +z", validate: bool = True
) -> list[PreparedSample]:
    """Ingest ``root/rgb/<id>`` with 8-bit normal maps ``root/normals/<id>.png``.

    Invalid pixels must be stored as mid-gray. ``stored_convention`` documents
    the axis frame of the stored maps.
    """
    root, out = Path(root), Path(out)
    _prepare_dirs(out)
    samples = []
    for npath in sorted((root / "normals").glob("*.png")):
        sid = npath.stem
        rgb = _find_image(root / "rgb", sid)
        if rgb is None:
            log.warning("no RGB image for normal map %s", npath)
            continue
        w, h = _copy_rgb(rgb, out / "images" / f"{sid}.png")
        _copy_rgb(npath, out / "gt" / f"{sid}.png")
        samples.append(
            PreparedSample(
                sid, "nyuv2_normals", f"images/{sid}.png", f"gt/{sid}.png", "normals_png", w, h,
                f"normals:{stored_convention}",
            )
        )
    return _finish(samples, out, "nyuv2_normals", validate)


def ingest_diode(
    root: str | Path, out: str | Path, split: Literal["indoor", "outdoor"], validate: bool = True
) -> list[PreparedSample]:
    """Ingest the DIODE validation split.

    Expects ``<name>.png``, ``<name>_depth.npy`` and ``<name>_depth_mask.npy``
    anywhere under ``root/<split>`` (or ``root`` itself). Pixels are valid
    where both mask and depth are positive.
    """
    if split not in ("indoor", "outdoor"):
        raise ValueError(f"unknown DIODE split {split!r}")
    root, out = Path(root), Path(out)
    base = root / split if (root / split).is_dir() else root
    dataset_id = f"diode_{split}"
    _prepare_dirs(out)
    samples = []
    for depth_path in sorted(base.rglob("*_depth.npy")):
        name = depth_path.name[: -len("_depth.npy")]
        rgb = depth_path.with_name(f"{name}.png")
        mask_path = depth_path.with_name(f"{name}_depth_mask.npy")
        if not rgb.is_file() or not mask_path.is_file():
            log.warning("incomplete DIODE sample %s", depth_path)
            continue
        sid = "__".join(depth_path.relative_to(base).parent.parts + (name,))
        depth = np.squeeze(np.load(depth_path)).astype(np.float64)
        mask = np.squeeze(np.load(mask_path))
        if depth.shape != mask.shape:
            raise ShapeError(f"{depth_path}: depth {depth.shape} vs mask {mask.shape}")
        with np.errstate(invalid="ignore"):
            valid = (mask > 0) & (depth > 0) & np.isfinite(depth)
        w, h = _copy_rgb(rgb, out / "images" / f"{sid}.png")
        if (h, w) != depth.shape:
            raise ShapeError(f"{depth_path}: depth {depth.shape} vs image {(h, w)}")
        write_f32_plane(np.where(valid, depth, 0.0), out / "gt" / f"{sid}.f32")
        samples.append(
            PreparedSample(sid, dataset_id, f"images/{sid}.png", f"gt/{sid}.f32", "depth_raw_f32", w, h, "diode")
        )
    return _finish(samples, out, dataset_id, validate)


def ingest_cityscapes(root: str | Path, out: str | Path, validate: bool = True) -> list[PreparedSample]:
    """Ingest ``leftImg8bit/val`` with ``gtFine/val/*_gtFine_labelIds.png``.

    Label ids are remapped to the 19 train ids; ids outside the standard
    table become void and are counted in a warning.
    """
    root, out = Path(root), Path(out)
    _prepare_dirs(out)
    samples = []
    unknown_total = 0
    img_root = root / "leftImg8bit" / "val"
    for img_path in sorted(img_root.rglob("*_leftImg8bit.png")):
        sid = img_path.name[: -len("_leftImg8bit.png")]
        city = img_path.parent.name
        label_path = root / "gtFine" / "val" / city / f"{sid}_gtFine_labelIds.png"
        if not label_path.is_file():
            log.warning("no labelIds annotation for %s", img_path)
            continue
        w, h = _copy_rgb(img_path, out / "images" / f"{sid}.png")
        with Image.open(label_path) as im:
            label_ids = np.asarray(im)
        if label_ids.shape != (h, w):
            raise ShapeError(f"{label_path}: {label_ids.shape} vs image {(h, w)}")
        train_ids, unknown = label_ids_to_train_ids(label_ids)
        unknown_total += unknown
        write_labels_png(train_ids, out / "gt" / f"{sid}.png")
        samples.append(
            PreparedSample(sid, "cityscapes", f"images/{sid}.png", f"gt/{sid}.png", "labels_png", w, h, "gtFine")
        )
    if unknown_total:
        warnings.warn(
            f"cityscapes: {unknown_total} pixels carried unknown labelIds and were set to void",
            DatasetValidationWarning,
            stacklevel=2,
        )
    return _finish(samples, out, "cityscapes", validate)
