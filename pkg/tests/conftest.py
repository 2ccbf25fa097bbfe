import os

import numpy as np
import pytest

from raesparse.model import ModelParams

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
MNIST5K = os.path.join(DATA_DIR, "mnist5k-images-idx3-ubyte.gz")
MNIST5K_LABELS = os.path.join(DATA_DIR, "mnist5k-labels-idx1-ubyte.gz")

# criterion number -> (passed, summary); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def small_params(rng, n=7, m=5):
    return ModelParams(rng.normal(0, 0.5, size=(m, n)), rng.normal(0, 0.3, size=m),
                       rng.normal(0, 0.3, size=n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
