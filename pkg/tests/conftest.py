import numpy as np
import pytest
from hypothesis import settings

from polydamp.signal_model import ComponentParams, TimeGrid

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def grid200():
    return TimeGrid.uniform(200)


@pytest.fixture
def three_lines():
    """Cisoid, Lorentzian and Voigt lines with fixed phases."""
    return [
        ComponentParams(1.0, 0.3, 0.7),
        ComponentParams(1.0, 1.1, 0.5, 1 / 200),
        ComponentParams(1.0, 2.0, 1.5, 1 / 150, 1e-5),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion.

    Lines are printed immediately and repeated in the terminal summary so
    they survive output capturing.
    """
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
