"""Batch evaluation: pair generated images with prepared ground truth,
decode them, and aggregate per-task metrics into a report."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from editeval import __version__
from editeval.core import LabelMap, RasterImage, read_image
from editeval.datasets import TASK_OF_KIND, PreparedSample, load_gt, read_manifest
from editeval.depth import (
    DegenerateFitError,
    EmptyMaskError,
    affine_align,
    decode_luminance,
    degenerate_metrics,
    depth_metrics,
    eval_mask,
)
from editeval.normals import (
    THRESHOLDS_DEG,
    MIN_NORM_8BIT,
    AxisConvention,
    NormalAccumulator,
    all_conventions,
    angular_error,
    apply_convention,
    calibrate_convention,
    decode_normals,
)
from editeval.resample import resize_bilinear, resize_nearest
from editeval.segmentation import (
    ConfusionMatrix,
    accumulate_confusion,
    build_prompt,
    decode_palette,
    group_to_categories,
    oracle_class_list,
    palette_for,
    seg_metrics,
    space_for,
)

log = logging.getLogger(__name__)

EvalTask = Literal["depth", "normals", "seg19", "seg7"]
TASKS: tuple[str, ...] = ("depth", "normals", "seg19", "seg7")
CACHE_ENV = "EDITEVAL_CACHE_DIR"
CALIBRATION_K = 5
GENERATED_EXTS = (".png", ".jpg", ".jpeg", ".webp")

DEPTH_PROMPT = (
    "Convert this image into a grayscale depth map with smooth gradual transitions. "
    "Nearby objects appear bright, distant objects appear dark."
)
NORMALS_PROMPT = (
    "Generate a surface normal estimation visualization of this image. "
    "Use the standard normal map color convention: surfaces facing left are pinkish-red, "
    "surfaces facing up are light green, surfaces facing the camera are light blue/purple."
)

AGGREGATION = {
    "depth": "per-image mean of affine-aligned metrics",
    "normals": "pixel-pooled angular errors",
    "seg19": "dataset-level confusion matrix",
    "seg7": "dataset-level confusion matrix",
}


class ConfigError(ValueError):
    """Inconsistent configuration or prepared dataset; maps to exit code 1."""


class CalibrationCacheError(RuntimeError):
    pass


def _granularity(task: str) -> str:
    return "classes19" if task == "seg19" else "categories7"


def task_prompt(task: str, classes: list[int] | None = None) -> str:
    if task == "depth":
        return DEPTH_PROMPT
    if task == "normals":
        return NORMALS_PROMPT
    if task in ("seg19", "seg7"):
        if not classes:
            raise ValueError(f"task {task} needs a class list")
        g = _granularity(task)
        return build_prompt(list(classes), space_for(g), palette_for(g), g)
    raise ValueError(f"unknown task {task!r}")


@dataclass
class EvalConfig:
    task: EvalTask
    model_id: str
    generated_dir: Path
    prepared_dir: Path
    dataset_id: str | None = None  # defaults to the manifest's dataset id
    calibration_cache: Path | None = None
    crop: str | None = None
    depth_cap: tuple[float, float] | None = None
    jobs: int = 1
    generation_meta: dict[str, Any] = field(default_factory=dict)

    def echo(self) -> dict[str, Any]:
        # parallelism is deliberately left out: it must not change the report
        return {
            "task": self.task,
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "generated_dir": str(self.generated_dir),
            "prepared_dir": str(self.prepared_dir),
            "crop": self.crop,
            "depth_cap": list(self.depth_cap) if self.depth_cap else None,
            "generation_meta": dict(self.generation_meta),
        }


@dataclass
class SampleRow:
    sample_id: str
    status: str  # "ok", "missing" or "failed"
    metrics: dict[str, Any] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


@dataclass
class Report:
    per_sample: list[SampleRow]
    aggregate: dict[str, Any] | None
    metadata: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "metadata": self.metadata,
            "aggregate": self.aggregate,
            "per_sample": [asdict(r) for r in self.per_sample],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Report:
        return cls(
            [SampleRow(**r) for r in data["per_sample"]],
            data["aggregate"],
            data["metadata"],
        )


# -- pairing and loading ------------------------------------------------------


def _load_samples(config: EvalConfig) -> list[PreparedSample]:
    samples = read_manifest(config.prepared_dir)
    if not samples:
        raise ConfigError(f"{config.prepared_dir}: manifest is empty")
    want = "segmentation" if config.task in ("seg19", "seg7") else config.task
    kinds = {s.gt_kind for s in samples}
    for kind in kinds:
        if TASK_OF_KIND.get(kind) != want:
            raise ConfigError(f"task {config.task} does not match ground-truth kind {kind}")
    ids = {s.dataset_id for s in samples}
    if config.dataset_id is None:
        if len(ids) != 1:
            raise ConfigError(f"manifest mixes dataset ids {sorted(ids)}")
        config.dataset_id = ids.pop()
    return samples


def find_generated(generated_dir: Path, sample_id: str) -> Path | None:
    for ext in GENERATED_EXTS:
        p = Path(generated_dir) / f"{sample_id}{ext}"
        if p.is_file():
            return p
    return None


def _load_pair(config: EvalConfig, sample: PreparedSample) -> tuple[RasterImage, Any] | None:
    path = find_generated(config.generated_dir, sample.sample_id)
    if path is None:
        return None
    gt = load_gt(sample, config.prepared_dir)
    img = read_image(path)
    w, h = sample.width, sample.height
    if config.task in ("seg19", "seg7"):
        img = resize_nearest(img, w, h)
    else:
        img = resize_bilinear(img, w, h)
    return img, gt


# -- calibration --------------------------------------------------------------


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "editeval"


def cache_path(cache_dir: Path, model_id: str, dataset_id: str) -> Path:
    return Path(cache_dir) / f"{_safe(model_id)}__{_safe(dataset_id)}.calib.json"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _record_text(record: dict[str, Any]) -> str:
    return json.dumps(record, indent=2, ensure_ascii=False) + "\n"


def read_calibration(path: Path, model_id: str, dataset_id: str) -> dict[str, Any] | None:
    if not path.is_file():
        return None
    record = json.loads(path.read_text(encoding="utf-8"))
    if record.get("model_id") != model_id or record.get("dataset_id") != dataset_id:
        raise CalibrationCacheError(
            f"{path} holds a record for ({record.get('model_id')}, {record.get('dataset_id')}), "
            f"not ({model_id}, {dataset_id})"
        )
    return record


def convention_from_record(record: dict[str, Any]) -> AxisConvention:
    return AxisConvention(tuple(record["perm"]), tuple(record["signs"]))


def compute_calibration(config: EvalConfig, samples: list[PreparedSample] | None = None) -> dict[str, Any]:
    """Run the 48-way convention search on the first five decodable samples."""
    samples = samples if samples is not None else _load_samples(config)
    pairs, used = [], []
    for s in sorted(samples, key=lambda s: s.sample_id):
        if len(pairs) == CALIBRATION_K:
            break
        loaded = _load_pair(config, s)
        if loaded is None:
            continue
        img, gt = loaded
        pairs.append((decode_normals(img, min_norm=MIN_NORM_8BIT), gt))
        used.append(s.sample_id)
    if not pairs:
        raise ConfigError("no sample has a generated output to calibrate on")
    calib = calibrate_convention(pairs, k=CALIBRATION_K)
    conv = calib.convention
    return {
        "model_id": config.model_id,
        "dataset_id": config.dataset_id,
        "convention": str(conv),
        "perm": list(conv.perm),
        "signs": list(conv.signs),
        "k": len(used),
        "samples": used,
        "n_pixels": calib.n_pixels,
        "mean_error_deg": calib.best_error,
        "errors": [
            {"convention": str(c), "mean_deg": e} for c, e in zip(all_conventions(), calib.mean_errors)
        ],
    }


def calibrate(config: EvalConfig, force: bool = False) -> dict[str, Any]:
    """Compute and cache the convention record for (model, dataset).

    An existing record is returned untouched unless ``force`` is set.
    """
    samples = _load_samples(config)
    cache_dir = config.calibration_cache or default_cache_dir()
    path = cache_path(cache_dir, config.model_id, config.dataset_id)
    existing = read_calibration(path, config.model_id, config.dataset_id)
    if existing is not None and not force:
        return existing
    record = compute_calibration(config, samples)
    _atomic_write(path, _record_text(record))
    return record


def _calibration_for(config: EvalConfig, samples: list[PreparedSample]) -> dict[str, Any]:
    if config.calibration_cache is None:
        return compute_calibration(config, samples)
    path = cache_path(config.calibration_cache, config.model_id, config.dataset_id)
    record = read_calibration(path, config.model_id, config.dataset_id)
    if record is None:
        record = compute_calibration(config, samples)
        _atomic_write(path, _record_text(record))
    return record


# -- per-sample work ----------------------------------------------------------


@dataclass
class _Outcome:
    row: SampleRow
    errors: np.ndarray | None = None
    confusion: ConfusionMatrix | None = None


def _depth_sample(config: EvalConfig, sample: PreparedSample, img: RasterImage, gt) -> _Outcome:
    gt = gt.with_mask(eval_mask(gt, config.crop, config.depth_cap))
    pred = decode_luminance(img)
    flags: list[str] = []
    try:
        fit, aligned = affine_align(pred, gt)
        m = depth_metrics(aligned, gt)
    except DegenerateFitError as exc:
        fit = exc.fallback
        m = degenerate_metrics(gt, fit)
        flags.append("degenerate")
    metrics = {
        "delta1": m.delta1,
        "absrel": m.absrel,
        "rmse": m.rmse,
        "scale": fit.scale,
        "offset": fit.offset,
        "residual_rms": fit.residual_rms,
        "n_pixels": fit.n_pixels,
    }
    return _Outcome(SampleRow(sample.sample_id, "ok", metrics, flags))


def _normals_sample(
    config: EvalConfig, sample: PreparedSample, img: RasterImage, gt, conv: AxisConvention
) -> _Outcome:
    pred = apply_convention(decode_normals(img, min_norm=MIN_NORM_8BIT), conv)
    err = angular_error(pred, gt)
    flags = []
    if err.size == 0:
        flags.append("no_valid_pixels")
        metrics: dict[str, Any] = {"n_pixels": 0, "sum_deg": 0.0, "below": [0, 0, 0]}
    else:
        metrics = {
            "n_pixels": int(err.size),
            "sum_deg": float(np.sum(err)),
            "below": [int(np.count_nonzero(err < t)) for t in THRESHOLDS_DEG],
            "mean_deg": float(np.mean(err)),
            "median_deg": float(np.median(err)),
        }
    invalid = int(np.count_nonzero(gt.valid & ~pred.valid))
    if invalid:
        flags.append(f"invalid_pred_pixels={invalid}")
    return _Outcome(SampleRow(sample.sample_id, "ok", metrics, flags), errors=err)


def _seg_sample(config: EvalConfig, sample: PreparedSample, img: RasterImage, gt: LabelMap) -> _Outcome:
    g = _granularity(config.task)
    space, palette = space_for(g), palette_for(g)
    if config.task == "seg7":
        gt = group_to_categories(gt)
    classes = oracle_class_list(gt, space)
    pred = decode_palette(img, classes, palette, space)
    cm = accumulate_confusion(pred, gt, ConfusionMatrix.empty(space))
    n = cm.total
    correct = int(np.trace(cm.counts))
    flags = [] if classes else ["all_void"]
    metrics = {
        "classes": classes,
        "n_pixels": n,
        "n_correct": correct,
        "pixel_acc": correct / n if n else None,
    }
    return _Outcome(SampleRow(sample.sample_id, "ok", metrics, flags), confusion=cm)


def _process(config: EvalConfig, sample: PreparedSample, conv: AxisConvention | None) -> _Outcome:
    loaded = _load_pair(config, sample)
    if loaded is None:
        return _Outcome(SampleRow(sample.sample_id, "missing", {}, ["missing"]))
    img, gt = loaded
    try:
        if config.task == "depth":
            return _depth_sample(config, sample, img, gt)
        if config.task == "normals":
            return _normals_sample(config, sample, img, gt, conv)
        return _seg_sample(config, sample, img, gt)
    except EmptyMaskError as exc:
        return _Outcome(SampleRow(sample.sample_id, "failed", {}, [f"failed: {exc}"]))


# -- aggregation --------------------------------------------------------------


def _aggregate(config: EvalConfig, outcomes: list[_Outcome]) -> dict[str, Any] | None:
    ok = [o for o in sorted(outcomes, key=lambda o: o.row.sample_id) if o.row.status == "ok"]
    if not ok:
        return None
    if config.task == "depth":
        keys = ("delta1", "absrel", "rmse")
        agg: dict[str, Any] = {k: float(np.mean([o.row.metrics[k] for o in ok])) for k in keys}
        agg["n_samples"] = len(ok)
        agg["n_degenerate"] = sum("degenerate" in o.row.flags for o in ok)
        return agg
    if config.task == "normals":
        acc = NormalAccumulator()
        for o in ok:
            acc.add(o.errors)
        if acc.count == 0:
            return None
        m = acc.metrics()
        return {
            "mean_deg": m.mean_deg,
            "median_deg": m.median_deg,
            "a11": m.a11,
            "a22": m.a22,
            "a30": m.a30,
            "n_pixels": acc.count,
            "sum_deg": acc.total,
            "below": list(acc.below),
        }
    space = space_for(_granularity(config.task))
    cm = ConfusionMatrix.empty(space)
    for o in ok:
        cm = cm + o.confusion
    if cm.total == 0:
        return None
    m = seg_metrics(cm)
    return {
        "miou": m.miou,
        "pixel_acc": m.pixel_acc,
        "per_class_iou": {space[cid].name: iou for cid, iou in m.per_class_iou},
        "n_pixels": cm.total,
        "confusion": cm.counts.tolist(),
    }


def evaluate(config: EvalConfig) -> Report:
    samples = _load_samples(config)
    conv = None
    calib_record = None
    if config.task == "normals":
        calib_record = _calibration_for(config, samples)
        conv = convention_from_record(calib_record)

    def work(s: PreparedSample) -> _Outcome:
        return _process(config, s, conv)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(work, samples))
    else:
        outcomes = [work(s) for s in samples]

    rows = [o.row for o in outcomes]
    metadata: dict[str, Any] = {
        "tool_version": __version__,
        "task": config.task,
        "model_id": config.model_id,
        "dataset_id": config.dataset_id,
        "aggregation": AGGREGATION[config.task],
        "n_samples": len(rows),
        "n_evaluated": sum(r.status == "ok" for r in rows),
        "n_missing": sum(r.status == "missing" for r in rows),
        "n_failed": sum(r.status == "failed" for r in rows),
        "config": config.echo(),
    }
    if config.task in ("seg19", "seg7"):
        metadata["palette_version"] = palette_for(_granularity(config.task)).version
    if calib_record is not None:
        metadata["calibration"] = calib_record
    for r in rows:
        if r.status != "ok":
            log.warning("sample %s: %s", r.sample_id, ", ".join(r.flags))
    return Report(rows, _aggregate(config, outcomes), metadata)


# -- report output ------------------------------------------------------------


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format(value, "#.6g")
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def report_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def report_csv(report: Report) -> str:
    keys: list[str] = []
    for r in report.per_sample:
        for k in r.metrics:
            if k not in keys:
                keys.append(k)
    agg = report.aggregate or {}
    for k, v in agg.items():
        if k not in keys and not isinstance(v, (dict, list)):
            keys.append(k)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "status", "flags", *keys])
    for r in report.per_sample:
        writer.writerow([r.sample_id, r.status, ";".join(r.flags), *(_fmt(r.metrics.get(k)) for k in keys)])
    agg_flags = f"missing={report.metadata.get('n_missing', 0)};failed={report.metadata.get('n_failed', 0)}"
    writer.writerow(["__aggregate__", "ok" if report.aggregate else "empty", agg_flags,
                     *(_fmt(agg.get(k)) for k in keys)])
    return buf.getvalue()


def emit_report(report: Report, out: str | Path, fmt: Literal["json", "csv"] = "json") -> Path:
    """Write the report atomically as JSON or CSV."""
    out = Path(out)
    if fmt == "json":
        text = report_json(report)
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    _atomic_write(out, text)
    return out


def parse_report(text: str) -> Report:
    return Report.from_dict(json.loads(text))
