import numpy as np
import pytest

from epismc import BkParams, BlackKarasinski, SihrParams, StateVector


@pytest.fixture
def small_sihr():
    # N=1000, alpha=1/7, gamma=0.1, eta=0.1 -- small enough to hand-check
    return SihrParams(n=1000.0, alpha=1.0 / 7.0, gamma=0.1, eta=0.1)


@pytest.fixture
def small_state():
    return StateVector(s=990.0, i=10.0, h=0.0, r=0.0, log_beta=np.log(0.5))


@pytest.fixture
def table1_bk():
    return BlackKarasinski(BkParams(lam=1.0 / 35.0, mu=-1.3, sigma=0.4))
