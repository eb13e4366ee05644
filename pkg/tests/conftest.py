import numpy as np
import pytest
from hypothesis import settings

from kfpcert.model import FitzHughNagumo, KineticFokkerPlanck, to_general_form

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def fhn_unit():
    """FitzHugh-Nagumo a=b=c=1 in canonical form."""
    return to_general_form(FitzHughNagumo(1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def kfp_classic():
    """Kinetic Fokker-Planck gamma=2, beta=2 in canonical form."""
    return to_general_form(KineticFokkerPlanck(gamma=2.0, beta=2.0))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(7)
