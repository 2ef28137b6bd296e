import numpy as np
import pytest

from whode.cli import fixture_path, load_config
from whode.ode2 import integrate
from whode.problem import build_B


def fixture_config(name):
    return load_config(fixture_path(name))


@pytest.fixture(scope="session")
def antipov_cfg():
    return fixture_config("antipov")


@pytest.fixture(scope="session")
def khrapkov_cfg():
    return fixture_config("khrapkov")


@pytest.fixture(scope="session")
def identity_cfg():
    return fixture_config("identity")


@pytest.fixture(scope="session")
def antipov_B(antipov_cfg):
    return build_B(antipov_cfg.problem, antipov_cfg.poles)


@pytest.fixture(scope="session")
def khrapkov_B(khrapkov_cfg):
    return build_B(khrapkov_cfg.problem, khrapkov_cfg.poles)


@pytest.fixture(scope="session")
def antipov_traj(antipov_cfg, antipov_B):
    return integrate(antipov_cfg.problem, antipov_B, L=40, steps=2000)


@pytest.fixture(scope="session")
def khrapkov_traj(khrapkov_cfg, khrapkov_B):
    return integrate(khrapkov_cfg.problem, khrapkov_B, L=40, steps=2000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.acceptance_lines
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])


@pytest.fixture
def record(request):
    """Store and print the PASS/FAIL line of an acceptance criterion."""

    def _record(number, title, measured, passed):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {title}: {measured}"
        request.config.acceptance_lines[number] = line
        print(line)
        return passed

    return _record
