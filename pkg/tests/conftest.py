import numpy as np
import pytest

from rsbg.data import TrajectoryWindow


def random_window(rng, n, t_obs=8, t_pred=12, groups=None, start=0, scene="fixture"):
    steps = rng.normal(0.0, 0.3, size=(n, t_obs + t_pred, 2)) + rng.normal(0.0, 0.5, size=(n, 1, 2))
    track = np.cumsum(steps, axis=1) + rng.uniform(-5, 5, size=(n, 1, 2))
    adj = np.zeros((n, n))
    for g in groups or ():
        for a in g:
            for b in g:
                if a != b:
                    adj[a, b] = 1.0
    return TrajectoryWindow(list(range(1, n + 1)), track[:, :t_obs], track[:, t_obs:], start, adj, scene)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record and print the one-line verdict for an acceptance criterion."""

    def record(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"criterion {number} {title}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_window():
    return random_window
