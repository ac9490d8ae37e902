import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import ellstar as es


@pytest.fixture(scope="session")
def interval257():
    return es.build_domain("interval", 257)


@pytest.fixture(scope="session")
def lap257(interval257):
    return es.assemble(es.OperatorSpec(), interval257)


@pytest.fixture(scope="session")
def gelfand():
    return es.make_example("exp-shift", m=1, beta=[1.0])
