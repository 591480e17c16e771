import numpy as np
import pytest

from offgrid_doa import ArrayGeometry, build_dictionary, build_grid

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def paper_geometry():
    """16 sensors drawn from a 20-element half-wavelength ULA."""
    return ArrayGeometry.random_subarray(20, 16, 1)


@pytest.fixture(scope="session")
def grid():
    return build_grid(0.01)


@pytest.fixture(scope="session")
def paper_dictionary(paper_geometry, grid):
    return build_dictionary(paper_geometry, grid, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
