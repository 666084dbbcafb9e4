import numpy as np
import pytest

from qheat import BathSet, EngineSpec
from qheat.controller import ControllerSpec
from qheat.units import NEWTON_TO_EV_PER_NM


@pytest.fixture
def ref_spec():
    """Headline example parameters: levels in eV, couplings in eV/nm."""
    return EngineSpec(
        e1=-5.2, e2=-3.4, e3=-1.2, gamma0=1.0,
        g1=1.77e-3, g2=2.16e-3, g3=1.87e-3,
    )


@pytest.fixture
def ref_baths():
    return BathSet(T13=330.0, T23=280.0)


@pytest.fixture
def ref_ctrl():
    """Controller with kappa = 1e-12 N/nm, T = 280 K; mass/friction nominal."""
    return ControllerSpec(
        mass=1.44e6,
        kappa=1e-12 * NEWTON_TO_EV_PER_NM,
        xi=1e-3,
        temperature=280.0,
        force=0.0,
    )


def random_engine(rng, couple=True):
    """Moderate-scale engine draw keeping beta*|omega| in honest float range."""
    e = rng.uniform(-0.15, 0.15, 3)
    g = rng.uniform(-2e-3, 2e-3, 3) if couple else np.zeros(3)
    return EngineSpec(
        e1=e[0], e2=e[1], e3=e[2],
        gamma0=10 ** rng.uniform(-2, 0.5),
        g1=g[0], g2=g[1], g3=g[2],
    )


def random_baths(rng):
    T = rng.uniform(150.0, 600.0, 2)
    return BathSet(T13=float(T[0]), T23=float(T[1]))
