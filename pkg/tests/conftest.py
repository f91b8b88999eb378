import pytest

# acceptance verdict lines, filled by tests/test_acceptance.py
VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(tag: str, ok: bool, detail: str):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)
