import contextlib

import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        try:
            yield
        except BaseException as exc:
            _CRITERIA[number] = f"criterion {number}: FAIL  {title}  ({type(exc).__name__}: {exc})"
            print(_CRITERIA[number])
            raise
        _CRITERIA[number] = f"criterion {number}: PASS  {title}"
        print(_CRITERIA[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n].splitlines()[0])
