"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from editeval import __version__
from editeval.datasets import (
    OFFICIAL_SPECS,
    DatasetValidationWarning,
    ingest_cityscapes,
    ingest_diode,
    ingest_nyuv2_depth,
    ingest_nyuv2_normals,
    validate_samples,
)
from editeval.normals import AxisConvention
from editeval.runner import (
    CACHE_ENV,
    TASKS,
    CalibrationCacheError,
    ConfigError,
    EvalConfig,
    calibrate,
    default_cache_dir,
    emit_report,
    evaluate,
    task_prompt,
)
from editeval.segmentation import space_for

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


def _parse_classes(task: str, text: str | None) -> list[int] | None:
    if not text:
        return None
    space = space_for("classes19" if task == "seg19" else "categories7")
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        out.append(int(tok) if tok.isdigit() else space.id_of(tok))
    return out


def _parse_meta(items: list[str]) -> dict[str, str]:
    meta = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--meta expects KEY=VALUE, got {item!r}")
        meta[key] = value
    return meta


def cmd_prepare(args: argparse.Namespace) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DatasetValidationWarning)
        if args.dataset == "nyuv2":
            samples = ingest_nyuv2_depth(args.root, args.out, provenance=args.provenance, validate=False)
        elif args.dataset == "nyuv2_normals":
            samples = ingest_nyuv2_normals(args.root, args.out, validate=False)
        elif args.dataset in ("diode_indoor", "diode_outdoor"):
            samples = ingest_diode(args.root, args.out, args.dataset.split("_")[1], validate=False)
        else:
            samples = ingest_cityscapes(args.root, args.out, validate=False)
        report = None
        if not args.no_validate:
            report = validate_samples(samples, OFFICIAL_SPECS[args.dataset], prepared_dir=args.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"prepared {len(samples)} samples in {args.out}")
    if report is not None and not report.ok:
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_prompt(args: argparse.Namespace) -> int:
    print(task_prompt(args.task, _parse_classes(args.task, args.classes)))
    return EXIT_OK


def _config(args: argparse.Namespace) -> EvalConfig:
    return EvalConfig(
        task=args.task,
        model_id=args.model,
        generated_dir=Path(args.generated),
        prepared_dir=Path(args.dataset),
        calibration_cache=Path(args.cache) if getattr(args, "cache", None) else None,
        crop=getattr(args, "crop", None),
        depth_cap=tuple(args.depth_cap) if getattr(args, "depth_cap", None) else None,
        jobs=getattr(args, "jobs", 1),
        generation_meta=_parse_meta(getattr(args, "meta", []) or []),
    )


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = _config(args)
    if config.calibration_cache is None:
        config.calibration_cache = default_cache_dir()
    record = calibrate(config, force=args.force)
    print(f"{record['model_id']} / {record['dataset_id']}: {record['convention']} "
          f"(mean {record['mean_error_deg']:.3f} deg over k={record['k']})")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config(args)
    if config.task == "normals" and config.calibration_cache is None:
        config.calibration_cache = default_cache_dir()
    report = evaluate(config)
    path = emit_report(report, args.out, args.format)
    print(json.dumps(report.aggregate, indent=2) if report.aggregate else "no samples evaluated")
    print(f"report written to {path}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    from editeval.synth import write_synthetic_suite

    spec = json.loads(Path(args.spec).read_text()) if args.spec else {}
    inject = spec.get("inject")
    dirs = write_synthetic_suite(
        args.out,
        count=int(spec.get("count", 8)),
        width=int(spec.get("width", 64)),
        height=int(spec.get("height", 48)),
        seed=int(spec.get("seed", 0)),
        inject=AxisConvention(tuple(inject["perm"]), tuple(inject["signs"])) if inject else None,
    )
    for name, d in dirs.items():
        print(f"{name}: {d}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    from editeval.selftest import run_selftest

    checks = run_selftest(args.workdir, jobs=args.jobs)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="editeval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest an official dataset into the prepared layout")
    p.add_argument("dataset", choices=sorted(OFFICIAL_SPECS))
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provenance", default="raw", help="NYUv2 depth fill-in (raw or inpainted)")
    p.add_argument("--no-validate", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("prompt", help="print the prompt for a task")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--classes", help="comma-separated class names or ids (segmentation)")
    p.set_defaults(func=cmd_prompt)

    def common(p: argparse.ArgumentParser, tasks: tuple[str, ...]) -> None:
        p.add_argument("--task", required=True, choices=tasks)
        p.add_argument("--model", required=True)
        p.add_argument("--dataset", required=True, help="prepared dataset directory")
        p.add_argument("--generated", required=True, help="directory of generated <sample_id>.png")

    p = sub.add_parser("calibrate", help="compute and cache the normal-map axis convention")
    common(p, ("normals",))
    p.add_argument("--cache", help=f"cache directory (default ${CACHE_ENV} or ~/.cache/editeval)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="score generated outputs against ground truth")
    common(p, TASKS)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--crop", choices=("eigen",))
    p.add_argument("--depth-cap", nargs=2, type=float, metavar=("MIN", "MAX"))
    p.add_argument("--cache", help="calibration cache directory (normals)")
    p.add_argument("--meta", action="append", default=[], metavar="KEY=VALUE",
                   help="free-form generation metadata recorded in the report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write a synthetic dataset suite with encoded ground truth")
    p.add_argument("--spec", help="JSON with count, width, height, seed and optional inject {perm, signs}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("selftest", help="run the end-to-end oracle on synthetic data")
    p.add_argument("--workdir")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CalibrationCacheError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
