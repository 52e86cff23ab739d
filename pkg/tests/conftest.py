import pytest

_RESULTS = pytest.StashKey[dict]()
CRITERIA = range(1, 10)


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def report(request):
    """record(criterion, ok, detail): one verdict line per acceptance criterion."""
    results = request.config.stash[_RESULTS]

    def record(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[criterion] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for c in CRITERIA:
        terminalreporter.write_line(results.get(c, f"criterion {c}: FAIL  not evaluated (errored or deselected)"))
