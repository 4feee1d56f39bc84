import numpy as np
import pytest

from robust_cate.dgp import DgpSpec, generate
from robust_cate.posterior import SamplerConfig

# short chains for unit tests; acceptance tests use the defaults
QUICK_SAMPLER = SamplerConfig(chains=2, warmup=200, samples=300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def clean_whale():
    return generate(DgpSpec("whale", n=600, dim=5, density=0.0, seed=11))


@pytest.fixture(scope="session")
def whale_5pct():
    return generate(DgpSpec("whale", n=600, dim=5, density=0.05, seed=12))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
