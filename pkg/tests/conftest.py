import os
from pathlib import Path

import numpy as np
import pytest

from boltzlayer.collision import build_K, build_sphere
from boltzlayer.velocity import build_grid

# operator builds are cached on disk; override with BOLTZLAYER_CACHE_DIR
CACHE = Path(os.environ.get("BOLTZLAYER_CACHE_DIR", Path.home() / ".cache" / "boltzlayer"))


@pytest.fixture(scope="session")
def cache_dir():
    CACHE.mkdir(parents=True, exist_ok=True)
    return CACHE


@pytest.fixture(scope="session")
def op8(cache_dir):
    return build_K(build_grid(8, 5.0), build_sphere(8, 16), cache_directory=cache_dir)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16, 6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


@pytest.fixture
def report():
    def add(label, passed, detail):
        ACCEPTANCE.append((label, bool(passed), detail))
    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")
