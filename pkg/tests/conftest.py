"""Collects acceptance verdicts so the terminal summary can list them together."""

RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int(k.rstrip("abc")), k)):
        terminalreporter.write_line(RESULTS[key])
