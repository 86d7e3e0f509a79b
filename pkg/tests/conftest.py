from pathlib import Path

import numpy as np
import pytest
import yaml

from multiplex_cutoff import build_chain, build_polytope, maximize_entropy_rate, two_type_model

HERE = Path(__file__).parent
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def tolerances():
    return yaml.safe_load((HERE / "acceptance_config.yaml").read_text())


@pytest.fixture(scope="session")
def two_type():
    return two_type_model(100_000)


@pytest.fixture(scope="session")
def two_type_chart(two_type):
    return build_polytope(two_type)


@pytest.fixture(scope="session")
def two_type_opt(two_type, two_type_chart):
    return maximize_entropy_rate(two_type, two_type_chart)


@pytest.fixture(scope="session")
def two_type_chain(two_type, two_type_opt):
    return build_chain(two_type, two_type_opt.p_star)


@pytest.fixture
def rng(request):
    # stable per-test seed (str hash is salted per process)
    return np.random.default_rng(sum(map(ord, request.node.name)))


@pytest.fixture(scope="session")
def record_acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
