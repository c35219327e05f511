import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import _helpers  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if _helpers.ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _helpers.ACCEPTANCE:
            terminalreporter.write_line(line)
