import pytest

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Recorder ``(number, passed, detail)`` for the acceptance summary."""
    table = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, passed: bool, detail: str):
        table[number] = (passed, detail)
        line = f"ACCEPTANCE {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(ACCEPTANCE, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        passed, detail = table[number]
        terminalreporter.write_line(
            f"ACCEPTANCE {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
