import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("zcoll", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("zcoll")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = {}


@pytest.fixture
def verdict():
    def record(num: int, name: str, ok: bool, detail: str = ""):
        line = f"criterion {num} [{name}]: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE[num] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
