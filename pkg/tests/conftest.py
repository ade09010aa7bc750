import pytest

from dynalloc.core import SystemParams

_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def p_half():
    """lam=0.5, mu=1, delta=2, omega=1: the running example."""
    return SystemParams(0.5, 1.0, 2.0, 1.0)


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` prints and records one acceptance line, returning ``ok``."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(n, ok, detail):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        store[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_VERDICTS, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
