import numpy as np
import pytest

from multiclick.model import SlateParams
from multiclick.session_log import Session


def random_slate(rng: np.random.Generator, n: int, reverse: bool = True) -> SlateParams:
    """Random valid parameters for an n-position slate."""
    eta = rng.uniform(0.05, 0.95, n + 1).tolist()
    gamma = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        row = rng.dirichlet(np.ones(n))
        gamma[i, 1:] = row
    return SlateParams(eta, gamma.tolist(), rng.uniform(0.05, 1.0, n).tolist(),
                       rng.uniform(0.0, 0.95, n).tolist())


def make_sessions(click_lists, query="q", n=4, prefix="s"):
    ads = tuple(f"a{j}" for j in range(1, n + 1))
    return [Session(f"{prefix}{i}", query, ads, tuple(c)) for i, c in enumerate(click_lists)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
