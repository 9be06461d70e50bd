import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def cube_soup(center=(0.0, 0.0, 0.0), half=1.0):
    """Closed outward-oriented cube as an (12, 3, 3) triangle array."""
    c = np.asarray(center, dtype=float)
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, cc, d in quads:
        tris.append([v[a], v[b], v[cc]])
        tris.append([v[a], v[cc], v[d]])
    return np.array(tris) * half + c


@pytest.fixture
def cube_file(tmp_path):
    path = tmp_path / "cube.tri"
    np.savetxt(path, cube_soup().reshape(-1, 9))
    return path


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion, shown in the summary
# ---------------------------------------------------------------------------
_ACCEPTANCE_LINES = {}


class AcceptanceRecorder:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks = []

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))
        return bool(ok)

    @property
    def passed(self):
        return bool(self.checks) and all(ok for ok, _ in self.checks)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        failed = [d for ok, d in self.checks if not ok]
        detail = "; ".join(failed or [d for _, d in self.checks]) or "did not complete"
        return f"{status} criterion {self.number:2d} ({self.title}): {detail}"

    def assert_all(self):
        assert self.passed, self.line()


@pytest.fixture
def criterion(request):
    """Recorder for the acceptance criterion named by the test's ``criterion`` mark."""
    mark = request.node.get_closest_marker("criterion")
    rec = AcceptanceRecorder(*mark.args)
    yield rec
    _ACCEPTANCE_LINES[rec.number] = rec.line()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[number])
