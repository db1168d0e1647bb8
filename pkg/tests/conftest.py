import numpy as np
import pytest

from editeval.core import NormalField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit_field(rng, h, w, valid_frac=1.0):
    v = rng.normal(size=(h, w, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    valid = rng.random((h, w)) < valid_frac
    return NormalField(v, valid)


@pytest.fixture(scope="session")
def synth_suite(tmp_path_factory):
    from editeval.normals import AxisConvention
    from editeval.synth import write_synthetic_suite

    root = tmp_path_factory.mktemp("suite")
    inject = AxisConvention((2, 0, 1), (-1, 1, 1))
    dirs = write_synthetic_suite(root, count=7, width=40, height=30, seed=3, inject=inject)
    dirs["inject"] = inject
    return dirs


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
