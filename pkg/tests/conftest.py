import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record and print one ``PASS``/``FAIL`` line per acceptance criterion."""
    lines = request.config.stash[_VERDICTS]

    def emit(number: int, title: str, checks: dict, detail: str = ""):
        failed = [name for name, ok in checks.items() if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"{status} criterion {number}: {title}"
        if detail:
            line += f" [{detail}]"
        if failed:
            line += " (failed: " + ", ".join(failed) + ")"
        lines.append(line)
        print(line)
        assert not failed, line

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
