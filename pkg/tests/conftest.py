import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("fracext", max_examples=40, deadline=None, derandomize=True)
settings.load_profile("fracext")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
