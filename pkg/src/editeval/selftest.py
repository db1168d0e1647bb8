"""End-to-end oracle: evaluate encoded ground truth routed through 8-bit PNG."""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

from editeval.normals import AxisConvention
from editeval.runner import EvalConfig, evaluate
from editeval.synth import write_synthetic_suite


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def run_selftest(workdir: str | Path | None = None, count: int = 6, jobs: int = 1) -> list[Check]:
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(workdir) if workdir is not None else Path(tmp)
        inject = AxisConvention((1, 0, 2), (1, -1, 1))
        dirs = write_synthetic_suite(root, count=count, seed=7, inject=inject)
        gen = dirs["generated"]
        checks = []

        depth = evaluate(EvalConfig("depth", "selftest", gen / "depth", dirs["depth"], jobs=jobs))
        rows = [r.metrics for r in depth.per_sample]
        ok = all(m["delta1"] == 1.0 and m["absrel"] < 0.01 for m in rows)
        checks.append(Check("depth round trip", ok, f"delta1={depth.aggregate['delta1']:.6f} "
                                                     f"absrel={depth.aggregate['absrel']:.6f}"))

        normals = evaluate(EvalConfig("normals", "selftest", gen / "normals", dirs["normals"], jobs=jobs))
        calib = normals.metadata["calibration"]
        recovered = (tuple(calib["perm"]), tuple(calib["signs"])) == (inject.inverse().perm, inject.inverse().signs)
        mean = normals.aggregate["mean_deg"]
        checks.append(Check("normals calibration", recovered, f"convention={calib['convention']}"))
        checks.append(Check("normals round trip", mean < 1.0, f"mean={mean:.4f} deg"))

        for task in ("seg19", "seg7"):
            seg = evaluate(EvalConfig(task, "selftest", gen / task, dirs["seg"], jobs=jobs))
            miou = seg.aggregate["miou"]
            checks.append(Check(f"{task} round trip", miou == 1.0, f"mIoU={miou:.6f}"))
        return checks
