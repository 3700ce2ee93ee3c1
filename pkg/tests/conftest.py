"""Collects the acceptance criteria's PASS lines and prints them after the
run, outside pytest's capture, so every invocation shows one line per
criterion."""

acceptance_lines = []


def record_acceptance(line: str):
    acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_lines):
            terminalreporter.write_line(line)
