import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ota_assign import _backend  # noqa: E402

KERNEL_SETS = [pytest.param(_backend.pure, id="python")]
if _backend.compiled is not None:
    KERNEL_SETS.append(pytest.param(_backend.compiled, id="compiled"))


@pytest.fixture(params=KERNEL_SETS)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_boxes(rng, n, scale=1.0):
    xy = rng.uniform(0, scale, size=(n, 2))
    wh = rng.uniform(0, 0.5 * scale, size=(n, 2))
    return np.concatenate([xy, xy + wh], axis=1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
