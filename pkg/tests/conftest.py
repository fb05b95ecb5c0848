import numpy as np
import pytest

from rissec.rate import BeamState
from rissec.scenario import SystemConfig, generate_channels

_CRITERIA = {}


def random_state(rng, n, k, m, p_max=1.0):
    w = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    w *= np.sqrt(p_max) / np.linalg.norm(w)
    return BeamState(w, np.exp(1j * rng.uniform(0, 2 * np.pi, m)))


@pytest.fixture
def small_cfg():
    return SystemConfig(n_tx=3, m_ris=5, k_users=2)


@pytest.fixture
def instance(small_cfg):
    """(config, channels, state) for a small random scenario."""
    ch = generate_channels(small_cfg, 11)
    return small_cfg, ch, random_state(np.random.default_rng(11), 3, 2, 5)


@pytest.fixture
def criterion():
    """Record one acceptance verdict; reported in the terminal summary."""

    def record(number, title, passed, detail=""):
        _CRITERIA[number] = (title, bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[num]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {num:2d}: {title}  [{detail}]")
