import json

import numpy as np
from PIL import Image

from editeval.cli import main


def test_prompt(capsys):
    assert main(["prompt", "--task", "seg19", "--classes", "road,13"]) == 0
    assert capsys.readouterr().out.strip() == (
        "Convert this photo into a color-coded map: the road red, the car white, and everything else black."
    )
    assert main(["prompt", "--task", "depth"]) == 0
    assert "grayscale depth map" in capsys.readouterr().out


def test_prompt_errors_exit_1(capsys):
    assert main(["prompt", "--task", "seg7"]) == 1
    assert main(["prompt", "--task", "seg19", "--classes", "unicorn"]) == 1
    assert "error:" in capsys.readouterr().err


def test_synth_then_evaluate(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"count": 3, "width": 24, "height": 18, "seed": 1,
                                "inject": {"perm": [1, 0, 2], "signs": [1, -1, 1]}}))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s")]) == 0
    gen = tmp_path / "s" / "generated"
    rc = main(["evaluate", "--task", "depth", "--model", "m", "--dataset", str(tmp_path / "s" / "depth"),
               "--generated", str(gen / "depth"), "--out", str(tmp_path / "r.csv"), "--format", "csv",
               "--meta", "seed=0"])
    assert rc == 0
    assert (tmp_path / "r.csv").read_text().splitlines()[-1].startswith("__aggregate__,ok")
    rc = main(["calibrate", "--task", "normals", "--model", "m", "--dataset", str(tmp_path / "s" / "normals"),
               "--generated", str(gen / "normals"), "--cache", str(tmp_path / "cache")])
    assert rc == 0
    assert "-y +x +z" in capsys.readouterr().out


def test_evaluate_io_error(tmp_path):
    rc = main(["evaluate", "--task", "depth", "--model", "m", "--dataset", str(tmp_path / "nowhere"),
               "--generated", str(tmp_path), "--out", str(tmp_path / "r.json")])
    assert rc == 2


def test_bad_meta_exit_1(tmp_path):
    rc = main(["evaluate", "--task", "depth", "--model", "m", "--dataset", str(tmp_path),
               "--generated", str(tmp_path), "--out", str(tmp_path / "r.json"), "--meta", "novalue"])
    assert rc == 1


def test_prepare_count_mismatch_exit_1(tmp_path, capsys):
    root = tmp_path / "raw"
    (root / "rgb").mkdir(parents=True)
    (root / "depth").mkdir()
    Image.fromarray(np.zeros((480, 640, 3), np.uint8)).save(root / "rgb" / "0001.png")
    Image.fromarray(np.full((480, 640), 1000, np.uint16)).save(root / "depth" / "0001.png")
    assert main(["prepare", "nyuv2", "--root", str(root), "--out", str(tmp_path / "p")]) == 1
    assert "expected 654 samples, found 1" in capsys.readouterr().err
    assert main(["prepare", "nyuv2", "--root", str(root), "--out", str(tmp_path / "p"), "--no-validate"]) == 0


def test_selftest(tmp_path, capsys):
    assert main(["selftest", "--workdir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out
