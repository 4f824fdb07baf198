"""Shared pytest hooks: print one verdict line per release criterion."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = next((m for name, m in sys.modules.items()
                if name.rsplit(".", 1)[-1] == "test_acceptance"), None)
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("release criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
