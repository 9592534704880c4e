import pytest

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def verdict():
    """Record one pass/fail line per acceptance criterion."""

    def record(tag: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split(":")[0].lstrip("C"))):
            terminalreporter.write_line(line)
