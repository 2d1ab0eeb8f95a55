import pytest

from hardylab.cli import run_suite
from hardylab.geometry import Disk, Dumbbell
from hardylab.hardy import MeshParams, estimate_hardy
from hardylab.scalars import PExponent

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def disk_report():
    return estimate_hardy(Disk(1.0), PExponent(2.0), MeshParams(h=1.0 / 256))


@pytest.fixture(scope="session")
def dumbbell_report():
    return estimate_hardy(Dumbbell(), PExponent(2.0), MeshParams(h=1.0 / 512))


@pytest.fixture(scope="session")
def default_suite(tmp_path_factory):
    """The default catalog suite, run once: (exit code, rows, output directory)."""
    out = tmp_path_factory.mktemp("suite")
    code, rows = run_suite(out_dir=out)
    return code, rows, out


@pytest.fixture
def acceptance():
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
