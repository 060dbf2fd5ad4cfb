"""Shared test plumbing: the acceptance checklist printed after the run."""

_CRITERION_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption(
        "--paper-scale",
        action="store_true",
        default=False,
        help="also run the mixture study at its full published scale (hours)",
    )


def record_criterion(line: str) -> None:
    print(line)
    _CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERION_LINES):
            terminalreporter.write_line(line)
