import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from grazelab.model import ForcingParams, published_params


@pytest.fixture(scope="session")
def params():
    return published_params(b=0.1)


@pytest.fixture(scope="session")
def forcing_fast():
    """High-frequency drive used for most map-level checks."""
    return ForcingParams(A=2.0, T=0.5, d=0.5)


@pytest.fixture(scope="session")
def forcing_off():
    return ForcingParams(A=0.0, T=0.5, d=0.5)
