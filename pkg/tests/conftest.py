import pytest

from magtunnel.model import FROZEN_CONSTANTS

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def consts():
    return FROZEN_CONSTANTS


@pytest.fixture
def record(request):
    """``record(n, ok, detail)`` logs one acceptance line; printed in the terminal summary."""
    table = request.config.stash.setdefault(_ACCEPTANCE, {})

    def add(n, ok, detail):
        table[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return add


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_ACCEPTANCE, {})
    if not table:
        return
    terminalreporter.section("acceptance")
    for n in sorted(table):
        ok, detail = table[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
