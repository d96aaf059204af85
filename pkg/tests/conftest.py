import numpy as np
import pytest

from rankpert import finite_spec

_CRITERIA = {}


class CriterionLog:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.detail = ""
        self.passed = False

    def record(self, passed, detail=""):
        self.passed = bool(passed)
        self.detail = detail
        assert passed, f"criterion {self.number} failed: {detail}"


@pytest.fixture
def criterion(request):
    """Each acceptance test registers itself here; the summary prints one line per criterion."""
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    log = CriterionLog(number, title)
    _CRITERIA[number] = log
    yield log


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        c = _CRITERIA[number]
        status = "PASS" if c.passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} [{status}] {c.title}: {c.detail}")


def random_finite_spec(rng, max_dim=200, max_rank=3, min_dim=2):
    n = int(rng.integers(min_dim, max_dim + 1))
    N = int(rng.integers(1, max_rank + 1))
    lam = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n) * (rng.random() < 0.7)
    A = (rng.normal(size=(N, n)) + 1j * rng.normal(size=(N, n))) / np.sqrt(n)
    B = (rng.normal(size=(N, n)) + 1j * rng.normal(size=(N, n))) / np.sqrt(n)
    return finite_spec(lam, A, B)


@pytest.fixture
def toy_spec():
    """diag(0, 1) + u (x) u with u = (1, 1)."""
    return finite_spec([0, 1], [[1, 1]], [[1, 1]])
