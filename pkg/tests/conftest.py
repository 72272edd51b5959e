import numpy as np
import pytest

from tango import kernels
from tango.token_store import SceneSpec, synth_video


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_video():
    """The 32 x 14 x 14 synthetic video used for budget checks (sink planted at cell 0)."""
    return synth_video(SceneSpec(32, 14, 14, 32, n_blobs=4, amplitude=1, sigma=0.3, sink_index=0), seed=7)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, elapsed: float, limit: float, detail: str = "") -> str:
        within = elapsed < limit
        status = "PASS" if passed and within else "FAIL"
        line = f"{status} criterion {number:>2} {title}: {detail} [{elapsed:.2f}s, limit {limit:g}s]"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return status

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
