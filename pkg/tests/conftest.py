from __future__ import annotations

import pytest

from martinet.dispersion import build_table
from martinet.wavepacket import BumpProfile, PacketSpec


@pytest.fixture(scope="session")
def table10():
    return build_table(1, -10.0, 10.0)


@pytest.fixture(scope="session")
def table50():
    return build_table(1, -50.0, 50.0)


@pytest.fixture
def packet5():
    return PacketSpec(BumpProfile(5.0, 0.25), zeta_max=2000.0)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
