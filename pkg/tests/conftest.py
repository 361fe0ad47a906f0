from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session", autouse=True)
def kernel_cache(tmp_path_factory):
    """Share built kernel matrices across tests (and CLI subprocesses)."""
    if os.environ.get("CHOQUARD_CACHE_DIR"):
        yield Path(os.environ["CHOQUARD_CACHE_DIR"])
        return
    d = tmp_path_factory.mktemp("kernels")
    os.environ["CHOQUARD_CACHE_DIR"] = str(d)
    yield d
    os.environ.pop("CHOQUARD_CACHE_DIR", None)


@pytest.fixture(scope="session")
def default_grid():
    from choquard.solver import default_grid as dg

    return dg(3)


@pytest.fixture(scope="session")
def pekar_state(default_grid):
    """Ground state at (N, α, p) = (3, 2, 2) on the default grid."""
    from choquard.solver import SolveOptions, solve_choquard
    from choquard.specfun import Params

    return solve_choquard(Params(3, 2.0, 2.0), default_grid, SolveOptions(debug=True))


@pytest.fixture(scope="session")
def cubic_u0(default_grid):
    from choquard.solver import solve_local_shooting

    return solve_local_shooting(3, 4.0, default_grid)


@pytest.fixture(scope="session")
def limit_v0(default_grid):
    from choquard.solver import limit_N_ground_state

    return limit_N_ground_state(3, 3.0, default_grid)


@pytest.fixture(scope="session")
def small_grid():
    from choquard.grid import make_grid

    return make_grid(400, 20.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
