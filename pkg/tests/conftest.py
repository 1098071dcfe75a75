import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from casimir_afm.dielectrics import gold_ethanol_gold  # noqa: E402
from casimir_afm.lifshitz import force_curve, geometric_distances  # noqa: E402

XI1_294 = 2.419e14


@pytest.fixture(scope="session")
def gold_system():
    return gold_ethanol_gold()


@pytest.fixture(scope="session")
def gold_curve(gold_system):
    """Default 20-100 nm geometric curve, computed once per session."""
    return force_curve(gold_system, geometric_distances(), threads=4)


@pytest.fixture(scope="session")
def wide_curve(gold_system):
    """4 nm - 3 um curve used as the injected force in synthetic data."""
    return force_curve(gold_system, np.geomspace(4e-9, 3e-6, 60), threads=8)


_ACCEPTANCE = {}


@pytest.fixture
def record_acceptance():
    def record(n, ok, detail):
        _ACCEPTANCE[n] = (ok, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"ACCEPTANCE {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
