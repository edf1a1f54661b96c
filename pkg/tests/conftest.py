"""Shared pytest hooks: echo the acceptance pass/fail lines in the terminal summary."""


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance as acc

    if acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(acc.RESULTS):
            terminalreporter.write_line(acc.RESULTS[number])
