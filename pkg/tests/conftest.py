from __future__ import annotations

# Verdict lines from test_acceptance.py, repeated in the terminal summary so
# they show up without ``-s``.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: l.split("]")[0].split("[")[1].zfill(3)):
            terminalreporter.write_line(line)
