import numpy as np
import pytest

ACCEPTANCE_RESULTS = []


def record_criterion(name, ok, detail=""):
    ACCEPTANCE_RESULTS.append((name, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {name}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
