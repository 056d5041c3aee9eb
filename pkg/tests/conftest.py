import pytest

RESULTS = {}


@pytest.fixture
def report():
    """Record and print one pass/fail line for an acceptance criterion."""
    def _report(number, name, ok, detail, gating=True):
        tag = ("PASS" if ok else "FAIL") if gating else "INFO"
        line = f"criterion {number}: {tag}  {name}  ({detail})"
        RESULTS[(number, name)] = line
        print(line)
        return ok or not gating
    return _report


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=lambda k: (float(str(k[0]).rstrip("b")), k[1])):
            terminalreporter.write_line(RESULTS[key])
