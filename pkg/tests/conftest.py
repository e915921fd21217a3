import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sgihp.config import bundled, load_config  # noqa: E402
from sgihp.loopsolver import ClosureProblem, solve_full_closure  # noqa: E402
from sgihp.model import table2_config  # noqa: E402


@pytest.fixture(scope="session")
def table2():
    """Reference parameter set exactly as tabulated."""
    return table2_config()


@pytest.fixture(scope="session")
def partial_cfg():
    return load_config(bundled("table2-partial.cfg"))


def _solve(loaded, dynamics):
    proto = loaded.protocol
    problem = ClosureProblem(loaded.experiment, T3_resolution=proto.get("t3_resolution"),
                             stage4_mode=proto.get("stage4_mode", "time"), dynamics=dynamics)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve_full_closure(problem)


@pytest.fixture(scope="session")
def solved_exact(partial_cfg):
    """(config, report) closed against the exact (quartic) stage-4 dynamics."""
    return _solve(partial_cfg, "exact")


@pytest.fixture(scope="session")
def solved_analytic(partial_cfg):
    """(config, report) closed against the closed-form quadratic dynamics."""
    return _solve(partial_cfg, "analytic")


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Record one acceptance verdict; the lines are echoed in the terminal summary."""
    def _record(tag, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} [{tag}] {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
