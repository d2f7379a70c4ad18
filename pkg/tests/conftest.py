import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blindofdm.ofdm import OfdmConfig

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture
def cfg32():
    return OfdmConfig(num_subcarriers=32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def short_channel_config(n=8, cp_len=2, delay=2e-7):
    """Small config whose channel memory fits a short prefix (3 taps)."""
    return OfdmConfig(num_subcarriers=n, cp_len=cp_len, max_delay_spread_s=delay)


CRITERIA_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion, then assert it."""
    log = request.config.stash.setdefault(CRITERIA_KEY, {})

    def record(number, ok, detail):
        log[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(CRITERIA_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        ok, detail = log[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
