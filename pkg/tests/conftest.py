import numpy as np
import pytest

from hedgekit.marketdata import ReturnPanel
from hedgekit.synth import synthetic_panel


@pytest.fixture(scope="session")
def synth_panel():
    return synthetic_panel()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_panel(rng, k=50, n=3, noise=0.1):
    x = rng.normal(size=(k, n))
    y = x @ rng.normal(size=n) + noise * rng.normal(size=k)
    return ReturnPanel.from_arrays(x, y)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
