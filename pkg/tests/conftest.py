import pytest

VERDICTS: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> bool:
    VERDICTS[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(VERDICTS[number], flush=True)
    return passed


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
