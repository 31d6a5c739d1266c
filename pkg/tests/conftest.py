from collections import defaultdict

import pytest

from epsdyn.hamiltonians import ChargedParticleMedium, DriveSpec, PhysicalConstants
from epsdyn.phase_space_grid import GridSpec, make_grid

_ACCEPTANCE: dict[str, list[tuple[bool, str]]] = defaultdict(list)


@pytest.fixture
def criterion():
    """Record an acceptance outcome, then assert it."""

    def check(name: str, ok: bool, detail: str):
        _ACCEPTANCE[name].append((bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        results = _ACCEPTANCE[name]
        n_ok = sum(ok for ok, _ in results)
        status = "PASS" if n_ok == len(results) else "FAIL"
        terminalreporter.write_line(f"{name}: {status} ({n_ok}/{len(results)} cases)")
        for ok, detail in results:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAIL'}] {detail}")


@pytest.fixture
def constants():
    return PhysicalConstants()


@pytest.fixture
def medium():
    return ChargedParticleMedium()


@pytest.fixture
def real_drive():
    return DriveSpec(1.0, 1.0, "re")


@pytest.fixture
def small_grid():
    return make_grid(GridSpec(-10.0, 10.0, -8.0, 8.0, 64, 64))


@pytest.fixture(scope="session")
def default_grid():
    return make_grid(GridSpec(-20.0, 20.0, -10.0, 10.0, 256, 256))
