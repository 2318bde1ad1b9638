import numpy as np
import pytest

from crtm.kernel import assemble, constant_kernel
from crtm.mesh import build_mesh


@pytest.fixture
def small_mesh():
    return build_mesh(8, 16, 10.0, 20.0)


@pytest.fixture
def small_kernel(small_mesh):
    # eps comfortably above one angular cell so tumbles couple neighbours
    return assemble(constant_kernel(1.0, 0.5), small_mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def acceptance_line(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
