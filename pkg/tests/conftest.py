import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from epiphase import _backend, _pykernels  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def day0():
    return dt.date(2020, 3, 1)


def _backends():
    out = [pytest.param(_pykernels, id="python")]
    compiled = _backend.compiled()
    if compiled is not None:
        out.append(pytest.param(compiled, id="cython"))
    return out


@pytest.fixture(params=_backends())
def kernels(request, monkeypatch):
    """Run a test once per available kernel backend."""
    import epiphase.indicators as indicators

    monkeypatch.setattr(indicators, "kernels", request.param)
    return request.param


def write_csv(path, rows, header=("date", "value")):
    path.write_text(
        ",".join(header) + "\n" + "".join(",".join(str(c) for c in r) + "\n" for r in rows),
        encoding="utf-8",
    )
    return path


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
