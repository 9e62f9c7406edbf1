import json
from pathlib import Path

import numpy as np
import pytest

from leakyuq.network import init_net, load
from leakyuq.spectral import gll_grid

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_net():
    return load(FIXTURES / "reference_net.json")


@pytest.fixture(scope="session")
def reference_io():
    return json.loads((FIXTURES / "reference_io.json").read_text())


@pytest.fixture(scope="session")
def mu31():
    return np.sin(np.pi * gll_grid(31).nodes)


@pytest.fixture(scope="session")
def net3():
    """Random 3-layer net on 31 inputs with nonzero biases."""
    return init_net(31, 32, 3, seed=7, bias_scale=0.3)


REPORT_DIR = Path(__file__).resolve().parent.parent / "acceptance_reports"
_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one status line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def report(number, status, detail):
        if isinstance(status, (bool, np.bool_)):
            status = "PASS" if status else "FAIL"
        lines[number] = f"criterion {number:>2}: {status:<8} {detail}"
        print(lines[number])
        return status

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, None)
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
    REPORT_DIR.mkdir(exist_ok=True)
    (REPORT_DIR / "summary.txt").write_text("\n".join(lines[k] for k in sorted(lines)) + "\n")
