import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stochheat.noise import SpectralMeasure, build_gram  # noqa: E402


@pytest.fixture(scope="session")
def white_gram():
    """Point-mass spectral measure (covariance f = 1), d = 1, 16 modes."""
    return build_gram(SpectralMeasure.point_mass(1), 16)


@pytest.fixture(scope="session")
def riesz_gram():
    return build_gram(SpectralMeasure.riesz(0.5, 1, 0.3), 8)


@pytest.fixture(scope="session")
def white_gram_2d():
    return build_gram(SpectralMeasure.point_mass(2), 4)


# acceptance report -------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record the PASS/FAIL line for the acceptance criterion in the test name."""
    num = int(request.node.name.split("_")[2])

    def emit(ok: bool, detail: str) -> bool:
        ACCEPTANCE[num] = f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {detail}"
        print(ACCEPTANCE[num])
        return ok

    yield emit
    if num not in ACCEPTANCE:
        ACCEPTANCE[num] = f"FAIL criterion {num:2d}: raised before reporting ({request.node.name})"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
