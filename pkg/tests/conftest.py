import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record ``(passed, detail)`` for a numbered acceptance criterion."""
    results = request.config.stash[_KEY]

    def record(n: int, passed: bool, detail: str):
        results[n] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"ACCEPTANCE {n:2d} {'PASS' if passed else 'FAIL'}  {detail}")
