import numpy as np
import pytest

from nsfdecay.linear import DimensionlessParams
from nsfdecay.nsf import PhysicalParams, nondimensionalize, perfect_gas


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def unit_gas():
    """Perfect gas with R = C_v = 1 and kappa = nu, so beta = gamma = 1, mu_tilde = 1/2."""
    return nondimensionalize(PhysicalParams(lam=0.0, mu=0.5, kappa=1.0, cv=1.0), perfect_gas(1.0))


@pytest.fixture
def params11():
    return DimensionlessParams(1.0, 1.0, 0.5)
