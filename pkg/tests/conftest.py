import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one pass/fail line for an acceptance criterion."""

    def report(number: int, name: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
