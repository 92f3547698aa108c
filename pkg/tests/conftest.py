import numpy as np
import pytest

from plasthin.materials import MaterialLibrary, PhaseMaterial
from plasthin.microstructure import build_phase_map


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_phase():
    return MaterialLibrary((PhaseMaterial(mu2=2.0, k=1.0, yield_radius=1.0),
                            PhaseMaterial(mu2=4.0, k=2.0, yield_radius=0.5)))


@pytest.fixture
def laminate():
    return build_phase_map("laminate", 8, fractions=(0.5, 0.5))


def random_sym(rng, n=None):
    shape = (6,) if n is None else (n, 6)
    return rng.standard_normal(shape)
