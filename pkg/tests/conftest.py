import numpy as np
import pytest

from oeo.core import Bounds, Cluster, Solution


class FixedRng:
    """Stand-in stream returning scripted uniforms (for formula endpoints)."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, size=None):
        if size is None:
            return self.values.pop(0)
        out = np.array([self.values.pop(0) for _ in range(int(np.prod(size)))])
        return out.reshape(size)


def make_cluster(points, costs, local_g=None):
    pts = [np.asarray(p, dtype=float) for p in points]
    members = [Solution(p, float(c)) for p, c in zip(pts, costs)]
    return Cluster(pts[0].copy(), members, local_g)


@pytest.fixture
def unit2():
    return Bounds.box(0.0, 1.0, 2)


@pytest.fixture
def box10():
    return Bounds.box(-5.0, 5.0, 2)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
