import pytest

_ACCEPTANCE = {}


class Recorder:
    def __init__(self, store):
        self.store = store

    def __call__(self, number, status: str, detail: str) -> None:
        line = f"criterion {number}: {status} {detail}"
        self.store[number] = line
        print(line)


@pytest.fixture
def acceptance():
    """Records one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return Recorder(_ACCEPTANCE)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE, key=str):
            terminalreporter.write_line(_ACCEPTANCE[number])


_PROPERTIES = {}


def pytest_runtest_logreport(report):
    if "TestCriterion8" not in report.nodeid or report.when != "call":
        return
    name = report.nodeid.rsplit("::", 1)[-1].removeprefix("test_").replace("_", " ")
    _PROPERTIES[name] = report.passed
    ok = all(_PROPERTIES.values())
    _ACCEPTANCE[8] = ("criterion 8: " + ("PASS" if ok else "FAIL") + " "
                      + ", ".join(f"{n} {'ok' if v else 'failed'}" for n, v in _PROPERTIES.items())
                      + " (100 randomized cases each)")
